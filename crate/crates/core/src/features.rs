//! Contrastive candidate contexts and word-overlap similarity features.
//!
//! For one mention, tf-idf is computed over the bodies of its candidate
//! senses only, so the top-ranked words of each candidate are the ones
//! that set it apart from its siblings. An annotation context is then
//! compared against every ranked part of every candidate with four
//! measures: plain word matches (`wo`), matches weighted by context
//! counts (`ws`), by tf-idf (`to`) and by both (`ts`). Each is divided by
//! `ln(|context| + 1)`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::EntityId;

/// Number of similarity measures per part.
pub const MEASURES: usize = 4;

/// Top-word budget `n_f;w` and part count `n_f;p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub words: usize,
    pub parts: usize,
}

impl FeatureSettings {
    pub fn new(words: usize, parts: usize) -> Self {
        assert!(parts > 0, "part count must be positive");
        FeatureSettings { words, parts }
    }

    /// Words per part, `⌈n_f;w / n_f;p⌉`.
    pub fn part_capacity(&self) -> usize {
        self.words.div_ceil(self.parts)
    }

    /// Feature dimension for a mention with `candidates` senses.
    pub fn dimension(&self, candidates: usize) -> usize {
        MEASURES * self.parts * candidates
    }
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings { words: 100, parts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedWord {
    pub word: String,
    pub tfidf: f64,
}

/// Ranked top words of one candidate, chunked into parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContext {
    pub sense: EntityId,
    pub parts: Vec<Vec<RankedWord>>,
}

impl CandidateContext {
    pub fn word_count(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }
}

/// Smoothed inverse document frequency over `docs` candidate bodies.
pub fn idf(docs: usize, df: usize) -> f64 {
    ((1.0 + docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Builds the contrastive contexts of a mention's candidates, in the order
/// given. Document set = the candidate bodies; tf is the raw count.
pub fn build_candidate_contexts(bodies: &[(EntityId, &[String])], settings: FeatureSettings) -> Vec<CandidateContext> {
    let tfs: Vec<BTreeMap<&str, usize>> = bodies
        .iter()
        .map(|(_, body)| {
            let mut tf = BTreeMap::new();
            for w in body.iter() {
                *tf.entry(w.as_str()).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for tf in &tfs {
        for w in tf.keys() {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let cap = settings.part_capacity().max(1);
    bodies
        .iter()
        .zip(&tfs)
        .map(|((sense, _), tf)| {
            let mut scored: Vec<RankedWord> = tf
                .iter()
                .map(|(w, &c)| RankedWord {
                    word: w.to_string(),
                    tfidf: c as f64 * idf(bodies.len(), df[w]),
                })
                .collect();
            scored.sort_by(|a, b| {
                b.tfidf
                    .partial_cmp(&a.tfidf)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.word.cmp(&b.word))
            });
            scored.truncate(settings.words);
            let mut parts: Vec<Vec<RankedWord>> = vec![Vec::new(); settings.parts];
            for (i, w) in scored.into_iter().enumerate() {
                parts[(i / cap).min(settings.parts - 1)].push(w);
            }
            CandidateContext { sense: *sense, parts }
        })
        .collect()
}

/// Unique context words with their counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub pairs: Vec<(String, usize)>,
    pub length: usize,
}

impl ContextVector {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
        ContextVector {
            pairs: counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect(),
            length: tokens.len(),
        }
    }
}

/// `(wo, ws, to, ts)` for one part.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Similarity {
    pub wo: f64,
    pub ws: f64,
    pub to: f64,
    pub ts: f64,
}

impl Similarity {
    pub fn as_array(&self) -> [f64; MEASURES] {
        [self.wo, self.ws, self.to, self.ts]
    }
}

fn denominator(length: usize) -> Option<f64> {
    (length > 0).then(|| ((length + 1) as f64).ln())
}

/// The four similarity measures between a context and one candidate part.
pub fn similarity(context: &ContextVector, part: &[RankedWord]) -> Similarity {
    let Some(denom) = denominator(context.length) else {
        return Similarity::default();
    };
    let mut s = Similarity::default();
    for (w, count) in &context.pairs {
        for r in part.iter().filter(|r| &r.word == w) {
            let v = *count as f64;
            s.wo += 1.0;
            s.ws += v;
            s.to += r.tfidf;
            s.ts += v * r.tfidf;
        }
    }
    s.wo /= denom;
    s.ws /= denom;
    s.to /= denom;
    s.ts /= denom;
    s
}

/// Per-mention lookup structure: one word → (part, tf-idf) table per
/// candidate, so featurizing costs one lookup per context word and
/// candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureIndex {
    parts: usize,
    candidates: Vec<HashMap<String, (usize, f64)>>,
}

impl FeatureIndex {
    pub fn new(contexts: &[CandidateContext], parts: usize) -> Self {
        let candidates = contexts
            .iter()
            .map(|ctx| {
                ctx.parts
                    .iter()
                    .enumerate()
                    .flat_map(|(p, part)| part.iter().map(move |r| (r.word.clone(), (p, r.tfidf))))
                    .collect()
            })
            .collect();
        FeatureIndex { parts, candidates }
    }

    pub fn dimension(&self) -> usize {
        MEASURES * self.parts * self.candidates.len()
    }

    /// Feature vector laid out candidate-major, then part, then
    /// `(wo, ws, to, ts)`.
    pub fn featurize(&self, context: &ContextVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        let Some(denom) = denominator(context.length) else {
            return out;
        };
        for (c, table) in self.candidates.iter().enumerate() {
            for (w, count) in &context.pairs {
                let Some(&(p, t)) = table.get(w) else {
                    continue;
                };
                let v = *count as f64;
                let base = (c * self.parts + p) * MEASURES;
                out[base] += 1.0;
                out[base + 1] += v;
                out[base + 2] += t;
                out[base + 3] += v * t;
            }
        }
        for x in &mut out {
            *x /= denom;
        }
        out
    }
}
