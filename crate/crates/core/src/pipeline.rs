//! Batch prediction, pruning-sample collection and evaluation over datasets.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, EntityId};
use crate::disambiguator::Prediction;
use crate::error::Result;
use crate::eval::{score, EvalReport, Labeled, MacroPolicy, Timing};
use crate::pruner::{PruneFeatures, PruneSample};
use crate::store::{thread_pool, KnowledgeBase, ModelSource};

/// Model output for one mention occurrence, after optional pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct Linked {
    /// `None` when the pruner rejected the prediction.
    pub sense: Option<EntityId>,
    pub prediction: Prediction,
    pub features: PruneFeatures,
}

/// Runs the mention's model and the named pruner, if any. Returns `None`
/// when the mention has no model.
pub fn disambiguate(
    source: &dyn ModelSource,
    kb: &KnowledgeBase,
    pruner: Option<&str>,
    mention: &str,
    context: &[String],
) -> Result<Option<Linked>> {
    let Some(model) = source.model(mention)? else {
        return Ok(None);
    };
    let prediction = model.predict(mention, context)?;
    let title = kb.title(prediction.top_sense).unwrap_or("");
    let features = PruneFeatures::new(mention, title, prediction.top_probability);
    let mut sense = Some(prediction.top_sense);
    if let Some(key) = pruner {
        if let Some(p) = source.pruner(mention, key)? {
            if !p.keep(prediction.top_sense, &features) {
                sense = None;
            }
        }
    }
    Ok(Some(Linked {
        sense,
        prediction,
        features,
    }))
}

/// Disambiguates every annotation on `workers` threads, keeping input order.
pub fn predict_all(
    source: &dyn ModelSource,
    kb: &KnowledgeBase,
    pruner: Option<&str>,
    annotations: &[Annotation],
    workers: usize,
) -> Result<Vec<(Option<Linked>, Duration)>> {
    let pool = thread_pool(workers)?;
    pool.install(|| {
        annotations
            .par_iter()
            .map(|a| {
                let t = Instant::now();
                let linked = disambiguate(source, kb, pruner, &a.mention, &a.context)?;
                Ok((linked, t.elapsed()))
            })
            .collect()
    })
}

/// One record of the `predict` JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub mention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sense: Option<EntityId>,
    pub predicted_sense: Option<EntityId>,
    pub probabilities: Vec<f64>,
}

/// Input record of the `predict` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInput {
    pub mention: String,
    pub context: Vec<String>,
    #[serde(default)]
    pub gold_sense: Option<EntityId>,
}

/// Evaluates a dataset end to end: predict, optionally prune, score.
pub fn evaluate(
    source: &dyn ModelSource,
    kb: &KnowledgeBase,
    pruner: Option<&str>,
    annotations: &[Annotation],
    policy: MacroPolicy,
    workers: usize,
) -> Result<EvalReport> {
    let start = Instant::now();
    let linked = predict_all(source, kb, pruner, annotations, workers)?;
    let total = start.elapsed();
    let gold: Vec<Labeled> = annotations.iter().map(Labeled::gold).collect();
    let predicted: Vec<Labeled> = annotations
        .iter()
        .zip(&linked)
        .map(|(a, (l, _))| Labeled::predicted(a, l.as_ref().and_then(|l| l.sense)))
        .collect();
    let mut candidates = BTreeMap::new();
    for a in annotations {
        if !candidates.contains_key(&a.mention) {
            if let Some(m) = source.model(&a.mention)? {
                candidates.insert(a.mention.clone(), m.candidates.len());
            }
        }
    }
    let mut report = score(&gold, &predicted, &candidates, policy);
    let summed: Duration = linked.iter().map(|(_, d)| *d).sum();
    report.timing = Some(Timing {
        total_secs: total.as_secs_f64(),
        per_annotation_ms: summed.as_secs_f64() * 1e3 / annotations.len().max(1) as f64,
    });
    Ok(report)
}

/// Unpruned predictions with their correctness, grouped by mention.
pub fn prune_samples(
    source: &dyn ModelSource,
    kb: &KnowledgeBase,
    annotations: &[Annotation],
    workers: usize,
) -> Result<BTreeMap<String, Vec<PruneSample>>> {
    let linked = predict_all(source, kb, None, annotations, workers)?;
    let mut out: BTreeMap<String, Vec<PruneSample>> = BTreeMap::new();
    for (a, (l, _)) in annotations.iter().zip(linked) {
        if let Some(l) = l {
            out.entry(a.mention.clone()).or_default().push(PruneSample {
                predicted: l.prediction.top_sense,
                features: l.features,
                correct: l.prediction.top_sense == a.sense,
            });
        }
    }
    Ok(out)
}
