//! Training/validation datasets: per-mention split, per-sense cap and the
//! context scrambling used to build shrunk and noisy validation sets.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Corpus, EntityId, MentionGroup};
use crate::error::{Error, Result};
use crate::rng::{hash_str, mix, SplitMix64};

/// Context shrinkage `p_s1` and noise level `p_s2` of a scrambled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrambleSpec {
    pub keep: f64,
    pub noise: f64,
    pub seed: u64,
}

impl ScrambleSpec {
    pub fn new(keep: f64, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep) {
            return Err(Error::Invalid(format!("shrinkage {keep} must lie in [0, 1]")));
        }
        if !noise.is_finite() || noise < 0.0 {
            return Err(Error::Invalid(format!("noise level {noise} must be >= 0")));
        }
        Ok(ScrambleSpec { keep, noise, seed })
    }
}

/// The standard validation scrambles plus the pruner-training set.
pub const STANDARD_SCRAMBLES: [(&str, f64, f64); 5] = [
    ("B", 0.8, 0.2),
    ("C", 0.6, 0.0),
    ("D", 0.4, 0.0),
    ("E", 0.2, 0.0),
    ("F", 0.8, 0.0),
];

/// `⌊p·n⌋`, robust to products like `0.29 * 100 = 28.999…`.
pub fn scaled_floor(p: f64, n: usize) -> usize {
    ((p * n as f64) + 1e-9).floor().max(0.0) as usize
}

fn scaled_ceil(p: f64, n: usize) -> usize {
    (((p * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Splits each group `⌈ratio·n⌉ / rest`, uniformly at random per mention.
pub fn split_per_mention(groups: &[MentionGroup], ratio: f64, seed: u64) -> (Vec<MentionGroup>, Vec<MentionGroup>) {
    let mut train = Vec::with_capacity(groups.len());
    let mut held = Vec::with_capacity(groups.len());
    for g in groups {
        let n = g.annotations.len();
        let mut idx: Vec<usize> = (0..n).collect();
        SplitMix64::new(mix(seed, hash_str(&g.mention))).shuffle(&mut idx);
        let cut = if n < 2 {
            warn!("mention {:?} has {n} annotation(s); all go to training", g.mention);
            n
        } else {
            scaled_ceil(ratio, n)
        };
        let (a, b) = idx.split_at(cut);
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        let pick = |ix: &[usize]| ix.iter().map(|&i| g.annotations[i].clone()).collect();
        train.push(MentionGroup {
            mention: g.mention.clone(),
            candidates: g.candidates.clone(),
            annotations: pick(&a),
        });
        held.push(MentionGroup {
            mention: g.mention.clone(),
            candidates: g.candidates.clone(),
            annotations: pick(&b),
        });
    }
    (train, held)
}

/// Keeps at most `cap` annotations per sense, sampled without replacement.
/// Retained annotations keep their original relative order.
pub fn cap_per_sense(group: &MentionGroup, cap: usize, seed: u64) -> MentionGroup {
    let mut by_sense: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
    for (i, a) in group.annotations.iter().enumerate() {
        by_sense.entry(a.sense).or_default().push(i);
    }
    let mut keep = Vec::new();
    for (sense, idx) in by_sense {
        if idx.len() > cap {
            let mut rng = SplitMix64::new(mix(mix(seed, hash_str(&group.mention)), sense));
            keep.extend(rng.sample_indices(idx.len(), cap).into_iter().map(|j| idx[j]));
        } else {
            keep.extend(idx);
        }
    }
    keep.sort_unstable();
    MentionGroup {
        mention: group.mention.clone(),
        candidates: group.candidates.clone(),
        annotations: keep.into_iter().map(|i| group.annotations[i].clone()).collect(),
    }
}

/// Union of the body words of all candidates of a mention, sorted.
pub fn noisy_vocabulary(candidates: &[EntityId], corpus: &Corpus) -> Vec<String> {
    let mut set = BTreeSet::new();
    for id in candidates {
        if let Some(e) = corpus.get(*id) {
            set.extend(e.body.tokens.iter().map(String::as_str));
        }
    }
    set.into_iter().map(str::to_string).collect()
}

/// Seed for one annotation, independent of processing order.
pub fn annotation_seed(seed: u64, a: &Annotation) -> u64 {
    let s = mix(seed, a.containing_id);
    let s = mix(s, a.position.start as u64);
    let s = mix(s, a.position.len as u64);
    mix(s, hash_str(&a.mention))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScrambleOutcome {
    /// Noise words requested beyond the vocabulary size.
    pub clamped: bool,
}

/// Replaces the context with `⌊p_s1·L⌋` of its words plus `⌊p_s2·L⌋` words
/// from `noisy_vocab`, both without replacement, in random order.
pub fn scramble(a: &Annotation, spec: &ScrambleSpec, noisy_vocab: &[String]) -> (Annotation, ScrambleOutcome) {
    let mut rng = SplitMix64::new(annotation_seed(spec.seed, a));
    let len = a.context.len();
    let n_keep = scaled_floor(spec.keep, len).min(len);
    let n_noise = scaled_floor(spec.noise, len);
    let clamped = n_noise > noisy_vocab.len();
    let mut words: Vec<String> = rng
        .sample_indices(len, n_keep)
        .into_iter()
        .map(|i| a.context[i].clone())
        .collect();
    words.extend(
        rng.sample_indices(noisy_vocab.len(), n_noise)
            .into_iter()
            .map(|i| noisy_vocab[i].clone()),
    );
    rng.shuffle(&mut words);
    let out = Annotation {
        context: words,
        ..a.clone()
    };
    (out, ScrambleOutcome { clamped })
}

/// Scrambles every annotation of every group in parallel.
pub fn scramble_groups(groups: &[MentionGroup], spec: &ScrambleSpec, corpus: &Corpus) -> Vec<MentionGroup> {
    groups
        .par_iter()
        .map(|g| {
            let vocab = noisy_vocabulary(&g.candidates, corpus);
            let mut clamped = 0;
            let annotations = g
                .annotations
                .iter()
                .map(|a| {
                    let (s, o) = scramble(a, spec, &vocab);
                    clamped += o.clamped as usize;
                    s
                })
                .collect();
            if clamped > 0 {
                warn!(
                    "mention {:?}: noise clamped to vocabulary size for {clamped} annotation(s)",
                    g.mention
                );
            }
            MentionGroup {
                mention: g.mention.clone(),
                candidates: g.candidates.clone(),
                annotations,
            }
        })
        .collect()
}

/// One named dataset in a catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub file: String,
    /// Dataset this one was derived from, if any.
    pub source: Option<String>,
    pub scramble: Option<ScrambleSpec>,
    pub annotations: usize,
}

/// JSON manifest describing how every dataset snapshot was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetCatalog {
    pub split_ratio: f64,
    pub split_seed: u64,
    pub cap_per_sense: Option<usize>,
    pub datasets: Vec<DatasetEntry>,
}

impl DatasetCatalog {
    pub fn get(&self, name: &str) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn upsert(&mut self, entry: DatasetEntry) {
        match self.datasets.iter_mut().find(|d| d.name == entry.name) {
            Some(d) => *d = entry,
            None => self.datasets.push(entry),
        }
    }
}

/// Flattens groups back into a single annotation list.
pub fn flatten(groups: &[MentionGroup]) -> Vec<Annotation> {
    groups.iter().flat_map(|g| g.annotations.iter().cloned()).collect()
}
