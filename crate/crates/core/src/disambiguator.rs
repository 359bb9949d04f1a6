//! Per-mention models: contrastive contexts plus softmax-regression weights.

use std::sync::OnceLock;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntityId, MentionGroup};
use crate::error::{Error, Result};
use crate::features::{build_candidate_contexts, CandidateContext, ContextVector, FeatureIndex, FeatureSettings};
use crate::regression::{self, argmax, softmax, Samples, TrainConfig};
use crate::rng::fnv1a;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub objective: f64,
    pub samples: usize,
    pub skipped: usize,
    /// Hash of every training input; equal fingerprints mean retraining
    /// would reproduce the same model.
    pub fingerprint: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MentionModel {
    pub mention: String,
    /// Class order: `candidates[i]` is class `i`.
    pub candidates: Vec<EntityId>,
    pub settings: FeatureSettings,
    /// Row-major `|candidates| × (1 + dim)`, bias first.
    pub weights: Vec<f64>,
    pub candidate_contexts: Vec<CandidateContext>,
    pub meta: TrainingMeta,
    #[serde(skip)]
    index: OnceLock<FeatureIndex>,
}

impl PartialEq for MentionModel {
    fn eq(&self, other: &Self) -> bool {
        self.mention == other.mention
            && self.candidates == other.candidates
            && self.settings == other.settings
            && self.weights == other.weights
            && self.candidate_contexts == other.candidate_contexts
            && self.meta == other.meta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub top_index: usize,
    pub top_sense: EntityId,
    pub top_probability: f64,
}

impl MentionModel {
    pub fn new(
        mention: String,
        candidates: Vec<EntityId>,
        settings: FeatureSettings,
        weights: Vec<f64>,
        candidate_contexts: Vec<CandidateContext>,
        meta: TrainingMeta,
    ) -> Self {
        MentionModel {
            mention,
            candidates,
            settings,
            weights,
            candidate_contexts,
            meta,
            index: OnceLock::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.settings.dimension(self.candidates.len())
    }

    pub fn index(&self) -> &FeatureIndex {
        self.index
            .get_or_init(|| FeatureIndex::new(&self.candidate_contexts, self.settings.parts))
    }

    pub fn features(&self, context: &[String]) -> Vec<f64> {
        self.index().featurize(&ContextVector::from_tokens(context))
    }

    /// Checks the structural invariants of a loaded model.
    pub fn validate(&self) -> Result<()> {
        let rows = self.candidates.len();
        let expected = rows * (1 + self.dimension());
        if self.weights.len() != expected || self.candidate_contexts.len() != rows {
            return Err(Error::Dimension {
                mention: self.mention.clone(),
                expected,
                found: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid(format!("non-finite weight in model {:?}", self.mention)));
        }
        Ok(())
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<Prediction> {
        let classes = self.candidates.len();
        if x.len() != self.dimension() || self.weights.len() != classes * (1 + x.len()) {
            return Err(Error::Dimension {
                mention: self.mention.clone(),
                expected: self.weights.len() / classes.max(1),
                found: x.len() + 1,
            });
        }
        let probabilities = softmax(&regression::scores(&self.weights, classes, x));
        let top_index = argmax(&probabilities);
        Ok(Prediction {
            top_sense: self.candidates[top_index],
            top_probability: probabilities[top_index],
            top_index,
            probabilities,
        })
    }

    /// Full distribution over candidates for a lemmatized context.
    pub fn predict(&self, mention: &str, context: &[String]) -> Result<Prediction> {
        if mention != self.mention {
            return Err(Error::MentionMismatch {
                expected: self.mention.clone(),
                found: mention.to_string(),
            });
        }
        self.predict_features(&self.features(context))
    }
}

/// Hash of everything a mention model depends on.
pub fn training_fingerprint(
    group: &MentionGroup,
    corpus: &Corpus,
    settings: FeatureSettings,
    config: &TrainConfig,
) -> u64 {
    let mut buf = Vec::new();
    let mut put = |bytes: &[u8]| {
        buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(bytes);
    };
    put(group.mention.as_bytes());
    put(&(settings.words as u64).to_le_bytes());
    put(&(settings.parts as u64).to_le_bytes());
    put(&config.l2.to_le_bytes());
    put(&(config.max_iter as u64).to_le_bytes());
    put(&config.tol.to_le_bytes());
    for c in &group.candidates {
        put(&c.to_le_bytes());
        if let Some(e) = corpus.get(*c) {
            for t in &e.body.tokens {
                put(t.as_bytes());
            }
        }
    }
    for a in &group.annotations {
        put(&a.sense.to_le_bytes());
        for t in &a.context {
            put(t.as_bytes());
        }
    }
    fnv1a(&buf)
}

/// Learns the model of one ambiguous mention from its training annotations.
pub fn train_mention(
    group: &MentionGroup,
    corpus: &Corpus,
    settings: FeatureSettings,
    config: &TrainConfig,
) -> MentionModel {
    let empty: Vec<String> = Vec::new();
    let bodies: Vec<(EntityId, &[String])> = group
        .candidates
        .iter()
        .map(|&c| {
            let body = corpus.get(c).map(|e| e.body.tokens.as_slice()).unwrap_or(&empty);
            (c, body)
        })
        .collect();
    let contexts = build_candidate_contexts(&bodies, settings);
    let index = FeatureIndex::new(&contexts, settings.parts);
    let classes = group.candidates.len();

    let mut data = Samples::new(index.dimension());
    let mut skipped = 0;
    for a in &group.annotations {
        let Some(y) = group.class_of(a.sense) else {
            skipped += 1;
            continue;
        };
        let x = index.featurize(&ContextVector::from_tokens(&a.context));
        if x.iter().any(|v| !v.is_finite()) {
            skipped += 1;
            continue;
        }
        data.push(x, y);
    }
    if skipped > 0 {
        warn!("mention {:?}: skipped {skipped} annotation(s)", group.mention);
    }
    let mut present = vec![false; classes];
    for &y in &data.labels {
        present[y] = true;
    }
    let n_present = present.iter().filter(|&&p| p).count();
    if n_present < classes {
        debug!(
            "mention {:?}: {} of {classes} candidate(s) have no training annotations",
            group.mention,
            classes - n_present
        );
    }

    let cols = index.dimension() + 1;
    let (weights, iterations, objective) = if n_present <= 1 {
        // degenerate: the single observed class wins through its bias alone
        let only = present.iter().position(|&p| p).unwrap_or(0);
        let mut w = vec![0.0; classes * cols];
        for c in 0..classes {
            if c != only {
                w[c * cols] = -1e3;
            }
        }
        (w, 0, 0.0)
    } else {
        let (w, report) = regression::fit(classes, &data, config);
        (w, report.iterations, report.objective)
    };

    MentionModel::new(
        group.mention.clone(),
        group.candidates.clone(),
        settings,
        weights,
        contexts,
        TrainingMeta {
            iterations,
            objective,
            samples: data.len(),
            skipped,
            fingerprint: training_fingerprint(group, corpus, settings, config),
        },
    )
}
