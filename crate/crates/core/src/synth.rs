//! Seeded synthetic corpora for benchmarks and end-to-end checks.
//!
//! Every ambiguous mention gets several sense articles whose bodies draw a
//! fixed fraction of their words from a sense-exclusive vocabulary and the
//! rest from a shared pool. Citing articles link the mention to one sense
//! and surround it with a few of that sense's exclusive words, a few words
//! of sibling senses, and filler.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityId, RawArticle};
use crate::rng::{mix, SplitMix64};
use crate::text::{lemma_key, stop_verbs, stopwords};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mentions: usize,
    pub min_senses: usize,
    pub max_senses: usize,
    /// Fraction of sense-body words taken from the sense's own vocabulary.
    pub exclusive_fraction: f64,
    pub annotations_per_sense: usize,
    pub body_words: usize,
    pub exclusive_vocab: usize,
    pub common_vocab: usize,
    pub sentence_words: usize,
    pub sentences: usize,
    /// Chance that a citing-context word comes from the linked sense.
    pub signal: f64,
    /// Chance, per sibling sense, that a citing-context word comes from it.
    pub confusion: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mentions: 50,
            min_senses: 2,
            max_senses: 5,
            exclusive_fraction: 0.7,
            annotations_per_sense: 200,
            body_words: 80,
            exclusive_vocab: 40,
            common_vocab: 800,
            sentence_words: 12,
            sentences: 4,
            signal: 0.25,
            confusion: 0.02,
            seed: 1,
        }
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aiou";
const FINALS: &[u8] = b"aou";

/// Distinct pronounceable pseudo-words that survive lemmatization intact.
struct WordSource {
    rng: SplitMix64,
    used: HashSet<String>,
}

impl WordSource {
    fn next(&mut self) -> String {
        loop {
            let mut w = String::new();
            for i in 0..3 {
                w.push(CONSONANTS[self.rng.below(CONSONANTS.len())] as char);
                let vowels = if i == 2 { FINALS } else { VOWELS };
                w.push(vowels[self.rng.below(vowels.len())] as char);
            }
            if lemma_key(&w) == w
                && !stopwords().contains(&w)
                && !stop_verbs().contains(&w)
                && self.used.insert(w.clone())
            {
                return w;
            }
        }
    }

    fn take(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.next()).collect()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn sentences(words: &[String], per: usize) -> String {
    words
        .chunks(per.max(1))
        .map(|c| {
            let mut s = c.join(" ");
            s.push('.');
            capitalize(&s)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// The mention phrases of a generated corpus, in generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub articles: Vec<RawArticle>,
    /// (mention, sense ids)
    pub mentions: Vec<(String, Vec<EntityId>)>,
}

impl SynthCorpus {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            out.push_str(&serde_json::to_string(a).expect("articles serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut words = WordSource {
        rng: SplitMix64::new(mix(cfg.seed, 0x5eed)),
        used: HashSet::new(),
    };
    let common = words.take(cfg.common_vocab);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut articles = Vec::new();
    let mut mentions = Vec::new();
    let mut next_id: EntityId = 1;

    struct Sense {
        id: EntityId,
        title: String,
        vocab: Vec<String>,
    }
    let mut plan: Vec<(String, Vec<Sense>)> = Vec::new();
    for _ in 0..cfg.mentions {
        let surface = words.next();
        let span = cfg.max_senses.saturating_sub(cfg.min_senses) + 1;
        let n = cfg.min_senses + rng.below(span);
        let senses: Vec<Sense> = (0..n)
            .map(|_| {
                let id = next_id;
                next_id += 1;
                Sense {
                    id,
                    title: format!("{} ({})", capitalize(&surface), words.next()),
                    vocab: words.take(cfg.exclusive_vocab),
                }
            })
            .collect();
        plan.push((surface, senses));
    }

    for (_, senses) in &plan {
        for s in senses {
            let body: Vec<String> = (0..cfg.body_words)
                .map(|_| {
                    if rng.unit() < cfg.exclusive_fraction {
                        s.vocab[rng.below(s.vocab.len())].clone()
                    } else {
                        common[rng.below(common.len())].clone()
                    }
                })
                .collect();
            articles.push(RawArticle {
                id: s.id,
                title: s.title.clone(),
                redirect_to: None,
                body: sentences(&body, cfg.sentence_words),
            });
        }
    }

    for (surface, senses) in &plan {
        let confusion = cfg.confusion * (senses.len() - 1) as f64;
        for (k, s) in senses.iter().enumerate() {
            for _ in 0..cfg.annotations_per_sense {
                let total = cfg.sentence_words * cfg.sentences;
                let link_at = cfg.sentence_words + rng.below(cfg.sentence_words);
                let mut toks: Vec<String> = Vec::with_capacity(total);
                for i in 0..total {
                    if i == link_at {
                        toks.push(format!("[[{}|{}]]", s.title, surface));
                        continue;
                    }
                    let u = rng.unit();
                    let w = if u < cfg.signal {
                        &s.vocab[rng.below(s.vocab.len())]
                    } else if u < cfg.signal + confusion {
                        let mut j = rng.below(senses.len() - 1);
                        if j >= k {
                            j += 1;
                        }
                        &senses[j].vocab[rng.below(senses[j].vocab.len())]
                    } else {
                        &common[rng.below(common.len())]
                    };
                    toks.push(w.clone());
                }
                let id = next_id;
                next_id += 1;
                articles.push(RawArticle {
                    id,
                    title: format!("Citation {id}"),
                    redirect_to: None,
                    body: sentences(&toks, cfg.sentence_words),
                });
            }
        }
        mentions.push((surface.clone(), senses.iter().map(|s| s.id).collect()));
    }
    SynthCorpus { articles, mentions }
}
