//! Annotation extension: propagate each article's own link pairs to its
//! unlinked phrases and add self-title annotations.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::corpus::{extract_context, Annotation, Corpus, Entity, EntityId, ExtractionFlag};
use crate::text::{lemma_key, title_tokens, TokenSpan};

/// Mention → sense pairs of one article, plus which mention is the self pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMap {
    pub pairs: BTreeMap<String, EntityId>,
    pub self_mention: Option<String>,
}

/// Word overlap between a mention and a title, normalized by title length.
fn title_overlap(mention: &str, title: &str) -> f64 {
    let title = title_tokens(title);
    if title.is_empty() {
        return 0.0;
    }
    let m: HashSet<&str> = mention.split(' ').collect();
    let t: HashSet<&str> = title.iter().map(String::as_str).collect();
    m.intersection(&t).count() as f64 / t.len() as f64
}

/// One sense per mention from the article's original links. Competing
/// senses are resolved by title overlap (ties to the lower id), then the
/// article's own title overwrites whatever pair shares its mention.
pub fn unique_pairs(article: &Entity, links: &[&Annotation], corpus: &Corpus) -> PairMap {
    let mut senses: BTreeMap<&str, Vec<EntityId>> = BTreeMap::new();
    for a in links {
        if a.extraction_flag == ExtractionFlag::Link {
            senses.entry(a.mention.as_str()).or_default().push(a.sense);
        }
    }
    let mut pairs = BTreeMap::new();
    for (mention, mut ids) in senses {
        ids.sort_unstable();
        ids.dedup();
        let mut best = ids[0];
        let mut best_score = f64::NEG_INFINITY;
        for id in ids {
            let score = corpus.title(id).map(|t| title_overlap(mention, t)).unwrap_or(0.0);
            if score > best_score {
                best = id;
                best_score = score;
            }
        }
        pairs.insert(mention.to_string(), best);
    }
    let self_key = lemma_key(&article.title);
    let self_mention = if self_key.is_empty() {
        None
    } else {
        pairs.insert(self_key.clone(), article.id);
        Some(self_key)
    };
    PairMap { pairs, self_mention }
}

/// Left-to-right longest-match scan over the article body. Matches never
/// overlap an existing annotation span and never cross a sentence boundary.
pub fn extend_article(
    article: &Entity,
    pairs: &PairMap,
    existing: &[&Annotation],
    n_context: usize,
) -> Vec<Annotation> {
    let body = &article.body;
    let max_len = pairs.pairs.keys().map(|m| m.split(' ').count()).max().unwrap_or(0);
    let taken: Vec<TokenSpan> = existing.iter().map(|a| a.position).collect();
    let blocked = |span: &TokenSpan| taken.iter().any(|t| t.overlaps(span));

    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let sentence_end = body.sentence_range(body.sentence_of(i)).1;
        let mut found = None;
        for len in (1..=max_len.min(sentence_end - i)).rev() {
            let span = TokenSpan { start: i, len };
            if blocked(&span) {
                continue;
            }
            let key = body.tokens[i..i + len].join(" ");
            if let Some(&sense) = pairs.pairs.get(&key) {
                found = Some((span, key, sense));
                break;
            }
        }
        match found {
            Some((span, mention, sense)) => {
                let flag = if pairs.self_mention.as_deref() == Some(mention.as_str()) && sense == article.id {
                    ExtractionFlag::SelfTitle
                } else {
                    ExtractionFlag::Extended
                };
                out.push(Annotation {
                    containing_id: article.id,
                    mention,
                    sense,
                    context: extract_context(body, span, n_context),
                    extraction_flag: flag,
                    position: span,
                });
                i = span.end();
            }
            None => i += 1,
        }
    }
    out
}

/// True when `needle` is a strictly shorter token subsequence of `hay`.
fn strict_subsequence(needle: &[&str], hay: &[String]) -> bool {
    if needle.is_empty() || needle.len() >= hay.len() {
        return false;
    }
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Drops flag-1 annotations whose mention is a more general piece of the
/// containing article's own title ("engineering" inside "Biomedical
/// engineering").
pub fn apply_generality_filter(article: &Entity, annotations: Vec<Annotation>) -> Vec<Annotation> {
    let title = crate::text::lemmatize(&article.title);
    annotations
        .into_iter()
        .filter(|a| {
            a.extraction_flag != ExtractionFlag::Extended || {
                let m: Vec<&str> = a.mention.split(' ').collect();
                !strict_subsequence(&m, &title)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ExtendOptions {
    pub generality_filter: bool,
    pub n_context: usize,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            generality_filter: true,
            n_context: crate::corpus::N_CONTEXT,
        }
    }
}

/// Extends every article and returns the union of the input and the new
/// annotations, ordered by article id then span start.
pub fn extend_corpus(corpus: &Corpus, annotations: Vec<Annotation>, opts: ExtendOptions) -> Vec<Annotation> {
    let mut by_article: BTreeMap<EntityId, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        by_article.entry(a.containing_id).or_default().push(a);
    }
    let ids: Vec<EntityId> = corpus.entities.keys().copied().collect();
    let extended: Vec<(EntityId, Vec<Annotation>)> = ids
        .par_iter()
        .map(|id| {
            let article = &corpus.entities[id];
            let existing: Vec<&Annotation> = by_article.get(id).map(|v| v.iter().collect()).unwrap_or_default();
            let pairs = unique_pairs(article, &existing, corpus);
            let mut new = extend_article(article, &pairs, &existing, opts.n_context);
            if opts.generality_filter {
                new = apply_generality_filter(article, new);
            }
            (*id, new)
        })
        .collect();
    for (id, new) in extended {
        by_article.entry(id).or_default().extend(new);
    }
    let mut out = Vec::new();
    for (_, mut anns) in by_article {
        anns.sort_by_key(|a| (a.position.start, a.position.len, a.extraction_flag));
        out.extend(anns);
    }
    out
}
