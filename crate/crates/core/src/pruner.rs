//! Post-prediction pruning: uncertain predictions become NIL.
//!
//! Strategies are looked up by name in a [`PrunerRegistry`]; each fits one
//! [`MentionPruner`] per mention from predictions with known correctness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EntityId;
use crate::error::{Error, Result};
use crate::forest::{ForestParams, RandomForest};
use crate::rng::{hash_str, mix};
use crate::text::{lemmatize, title_tokens};

/// Length in words of the longest common contiguous run.
pub fn longest_common_run<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            if x.as_ref() == y.as_ref() {
                cur[j + 1] = prev[j] + 1;
                best = best.max(cur[j + 1]);
            }
        }
        prev = cur;
    }
    best
}

/// Jaccard ratio of the two token sets; two empty sets count as equal.
pub fn jaccard<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneFeatures {
    /// Probability of the predicted sense.
    pub g1: f64,
    /// Longest common word run between mention and predicted title.
    pub g2: f64,
    /// Word Jaccard between mention and predicted title.
    pub g3: f64,
}

impl PruneFeatures {
    pub fn new(mention: &str, predicted_title: &str, probability: f64) -> Self {
        let m = lemmatize(mention);
        let t = title_tokens(predicted_title);
        PruneFeatures {
            g1: probability,
            g2: longest_common_run(&m, &t) as f64,
            g3: jaccard(&m, &t),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.g1, self.g2, self.g3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSample {
    pub predicted: EntityId,
    pub features: PruneFeatures,
    pub correct: bool,
}

/// Precision and F-measure of one group when keeping `g1 ≥ theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub theta: f64,
    pub precision: f64,
    pub f_measure: f64,
}

fn point(g: &[f64], correct: &[bool], theta: f64) -> ThresholdPoint {
    let total = g.len();
    let (mut kept, mut hit) = (0usize, 0usize);
    for (&v, &c) in g.iter().zip(correct) {
        if v >= theta {
            kept += 1;
            hit += c as usize;
        }
    }
    if kept == 0 {
        return ThresholdPoint {
            theta,
            precision: 1.0,
            f_measure: 0.0,
        };
    }
    let p = hit as f64 / kept as f64;
    let r = hit as f64 / total as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    ThresholdPoint {
        theta,
        precision: p,
        f_measure: f,
    }
}

/// Unpruned baseline and one point per distinct observed probability,
/// ascending in theta.
pub fn threshold_curve(g: &[f64], correct: &[bool]) -> (ThresholdPoint, Vec<ThresholdPoint>) {
    let baseline = point(g, correct, f64::NEG_INFINITY);
    let mut thetas = g.to_vec();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    (baseline, thetas.into_iter().map(|t| point(g, correct, t)).collect())
}

/// Thresholds whose F-measure and precision-plus-F gains over the baseline
/// clear `beta0` and `beta1`.
pub fn admissible(g: &[f64], correct: &[bool], beta0: f64, beta1: f64) -> Vec<ThresholdPoint> {
    let (base, curve) = threshold_curve(g, correct);
    curve
        .into_iter()
        .filter(|k| {
            let df = k.f_measure - base.f_measure;
            df >= beta0 && k.precision - base.precision + df >= beta1
        })
        .collect()
}

/// Per-candidate threshold selection. Returns `None` for an empty group.
pub fn fit_threshold(g: &[f64], correct: &[bool], beta0: f64, beta1: f64) -> Option<f64> {
    assert_eq!(g.len(), correct.len());
    if g.is_empty() {
        return None;
    }
    let s = admissible(g, correct, beta0, beta1);
    // curves are ascending in theta, so strict comparisons keep the smaller theta
    let better_in_s = |a: &ThresholdPoint, b: &ThresholdPoint| {
        a.precision > b.precision || (a.precision == b.precision && a.f_measure > b.f_measure)
    };
    let better_fallback = |a: &ThresholdPoint, b: &ThresholdPoint| {
        a.f_measure > b.f_measure || (a.f_measure == b.f_measure && a.precision > b.precision)
    };
    let pick = |points: Vec<ThresholdPoint>, better: &dyn Fn(&ThresholdPoint, &ThresholdPoint) -> bool| {
        points
            .into_iter()
            .reduce(|best, k| if better(&k, &best) { k } else { best })
            .map(|k| k.theta)
    };
    if s.is_empty() {
        pick(threshold_curve(g, correct).1, &better_fallback)
    } else {
        pick(s, &better_in_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    /// Keep (`true`) or prune everything.
    Constant(bool),
    Forest(RandomForest),
}

impl Classifier {
    pub fn fit(x: &[Vec<f64>], correct: &[bool], params: &ForestParams) -> Self {
        if correct.iter().all(|&c| c) {
            Classifier::Constant(true)
        } else if correct.iter().all(|&c| !c) {
            Classifier::Constant(false)
        } else {
            Classifier::Forest(RandomForest::fit(x, correct, params))
        }
    }

    pub fn keep(&self, x: &[f64]) -> bool {
        match self {
            Classifier::Constant(k) => *k,
            Classifier::Forest(f) => f.predict(x),
        }
    }
}

/// Fitted pruning rule for one mention. Senses without an entry are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MentionPruner {
    KeepAll,
    /// One classifier over (g1, g2, g3).
    PerMention(Classifier),
    /// One classifier per predicted sense over g1.
    PerCandidate(BTreeMap<EntityId, Classifier>),
    Threshold(BTreeMap<EntityId, f64>),
}

impl MentionPruner {
    pub fn keep(&self, predicted: EntityId, f: &PruneFeatures) -> bool {
        match self {
            MentionPruner::KeepAll => true,
            MentionPruner::PerMention(c) => c.keep(&f.to_vec()),
            MentionPruner::PerCandidate(m) => m.get(&predicted).is_none_or(|c| c.keep(&[f.g1])),
            MentionPruner::Threshold(t) => t.get(&predicted).is_none_or(|&theta| f.g1 >= theta),
        }
    }
}

fn by_sense(samples: &[PruneSample]) -> BTreeMap<EntityId, Vec<&PruneSample>> {
    let mut out: BTreeMap<EntityId, Vec<&PruneSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.predicted).or_default().push(s);
    }
    out
}

pub trait PruneStrategy: Send + Sync {
    /// Storage key; distinct configurations get distinct keys.
    fn key(&self) -> String;
    fn fit(&self, mention: &str, samples: &[PruneSample]) -> MentionPruner;
}

impl fmt::Debug for dyn PruneStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PruneStrategy({})", self.key())
    }
}

pub struct NoPruning;

impl PruneStrategy for NoPruning {
    fn key(&self) -> String {
        "none".into()
    }

    fn fit(&self, _: &str, _: &[PruneSample]) -> MentionPruner {
        MentionPruner::KeepAll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Mention,
    Candidate,
}

pub struct ForestPruning {
    pub scope: Scope,
    pub params: ForestParams,
}

impl PruneStrategy for ForestPruning {
    fn key(&self) -> String {
        match self.scope {
            Scope::Mention => "forest-mention".into(),
            Scope::Candidate => "forest-candidate".into(),
        }
    }

    fn fit(&self, mention: &str, samples: &[PruneSample]) -> MentionPruner {
        let seed = mix(self.params.seed, hash_str(mention));
        match self.scope {
            Scope::Mention => {
                let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.to_vec()).collect();
                let y: Vec<bool> = samples.iter().map(|s| s.correct).collect();
                if x.is_empty() {
                    return MentionPruner::KeepAll;
                }
                MentionPruner::PerMention(Classifier::fit(&x, &y, &ForestParams { seed, ..self.params }))
            }
            Scope::Candidate => MentionPruner::PerCandidate(
                by_sense(samples)
                    .into_iter()
                    .map(|(sense, group)| {
                        let x: Vec<Vec<f64>> = group.iter().map(|s| vec![s.features.g1]).collect();
                        let y: Vec<bool> = group.iter().map(|s| s.correct).collect();
                        let params = ForestParams {
                            seed: mix(seed, sense),
                            ..self.params
                        };
                        (sense, Classifier::fit(&x, &y, &params))
                    })
                    .collect(),
            ),
        }
    }
}

pub struct ThresholdPruning {
    pub beta0: f64,
    pub beta1: f64,
}

impl PruneStrategy for ThresholdPruning {
    fn key(&self) -> String {
        format!("threshold@{},{}", self.beta0, self.beta1)
    }

    fn fit(&self, _: &str, samples: &[PruneSample]) -> MentionPruner {
        MentionPruner::Threshold(
            by_sense(samples)
                .into_iter()
                .filter_map(|(sense, group)| {
                    let g: Vec<f64> = group.iter().map(|s| s.features.g1).collect();
                    let h: Vec<bool> = group.iter().map(|s| s.correct).collect();
                    fit_threshold(&g, &h, self.beta0, self.beta1).map(|t| (sense, t))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrunerOptions {
    pub beta0: f64,
    pub beta1: f64,
    pub seed: u64,
}

impl Default for PrunerOptions {
    fn default() -> Self {
        PrunerOptions {
            beta0: -0.05,
            beta1: -0.02,
            seed: 0,
        }
    }
}

type Factory = Box<dyn Fn(&PrunerOptions) -> Box<dyn PruneStrategy> + Send + Sync>;

/// Named pruning strategies, resolved at runtime.
pub struct PrunerRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for PrunerRegistry {
    fn default() -> Self {
        let mut r = PrunerRegistry {
            factories: BTreeMap::new(),
        };
        r.register("none", |_| Box::new(NoPruning));
        r.register("forest-mention", |o| {
            Box::new(ForestPruning {
                scope: Scope::Mention,
                params: ForestParams {
                    seed: o.seed,
                    ..Default::default()
                },
            })
        });
        r.register("forest-candidate", |o| {
            Box::new(ForestPruning {
                scope: Scope::Candidate,
                params: ForestParams {
                    seed: o.seed,
                    ..Default::default()
                },
            })
        });
        r.register("threshold", |o| {
            Box::new(ThresholdPruning {
                beta0: o.beta0,
                beta1: o.beta1,
            })
        });
        r
    }
}

impl PrunerRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&PrunerOptions) -> Box<dyn PruneStrategy> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, options: &PrunerOptions) -> Result<Box<dyn PruneStrategy>> {
        let f = self.factories.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::Invalid(format!("unknown pruner {name:?}; known: {}", known.join(", ")))
        })?;
        Ok(f(options))
    }
}

/// Fits one pruner per mention, in parallel.
pub fn fit_all(
    strategy: &dyn PruneStrategy,
    samples: &BTreeMap<String, Vec<PruneSample>>,
) -> BTreeMap<String, MentionPruner> {
    samples
        .par_iter()
        .map(|(m, s)| (m.clone(), strategy.fit(m, s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(sense: EntityId, g1: f64, g2: f64, g3: f64, correct: bool) -> PruneSample {
        PruneSample {
            predicted: sense,
            features: PruneFeatures { g1, g2, g3 },
            correct,
        }
    }

    #[test]
    fn two_point_fixtures() {
        assert_eq!(fit_threshold(&[0.9, 0.4], &[true, false], -0.05, -0.02), Some(0.9));
        assert_eq!(fit_threshold(&[0.9, 0.4], &[false, true], -0.05, -0.02), Some(0.4));
        let (base, curve) = threshold_curve(&[0.9, 0.4], &[true, false]);
        assert_eq!((base.precision, base.f_measure), (0.5, 0.5));
        assert_eq!(curve[1].precision, 1.0);
        assert!((curve[1].f_measure - 2.0 / 3.0).abs() < 1e-15);
        // in the second fixture theta = 0.9 leaves f = 0 and is inadmissible
        let s = admissible(&[0.9, 0.4], &[false, true], -0.05, -0.02);
        assert!(s.iter().all(|k| k.theta != 0.9));
        assert_eq!(fit_threshold(&[], &[], 0.0, 0.0), None);
    }

    #[test]
    fn all_correct_keeps_everything() {
        assert_eq!(fit_threshold(&[0.3, 0.8, 0.6], &[true; 3], -0.05, -0.02), Some(0.3));
        let p = ForestPruning {
            scope: Scope::Mention,
            params: ForestParams::default(),
        }
        .fit("m", &[sample(1, 0.4, 0.0, 0.0, true), sample(2, 0.9, 1.0, 1.0, true)]);
        assert_eq!(p, MentionPruner::PerMention(Classifier::Constant(true)));
    }

    #[test]
    fn apply_threshold() {
        let p = MentionPruner::Threshold([(1, 0.5)].into());
        let f = |g1| PruneFeatures { g1, g2: 0.0, g3: 0.0 };
        assert!(p.keep(1, &f(0.7)));
        assert!(!p.keep(1, &f(0.3)));
        assert!(p.keep(1, &f(0.5)));
        assert!(p.keep(2, &f(0.1)));
    }

    #[test]
    fn forest_recovers_g1_rule() {
        let samples: Vec<PruneSample> = (0..60)
            .map(|i| {
                let g1 = 0.5 + i as f64 / 120.0;
                sample(1 + (i % 2) as u64, g1, 1.0, 0.5, g1 > 0.9)
            })
            .collect();
        for scope in [Scope::Mention, Scope::Candidate] {
            let p = ForestPruning {
                scope,
                params: ForestParams {
                    seed: 7,
                    ..Default::default()
                },
            }
            .fit("m", &samples);
            for s in &samples {
                assert_eq!(
                    p.keep(s.predicted, &s.features),
                    s.correct,
                    "{scope:?} {:?}",
                    s.features
                );
            }
        }
    }

    #[test]
    fn g2_g3_separable_fixture() {
        // correctness depends only on which sense was predicted; g1 overlaps
        let mut samples = Vec::new();
        for i in 0..20 {
            let g1 = 0.5 + (i % 5) as f64 / 10.0;
            samples.push(sample(1, g1, 2.0, 1.0, true));
            samples.push(sample(2, g1, 0.0, 0.0, false));
        }
        let acc = |p: &MentionPruner| {
            samples
                .iter()
                .filter(|s| p.keep(s.predicted, &s.features) == s.correct)
                .count() as f64
                / samples.len() as f64
        };
        let per_mention = ForestPruning {
            scope: Scope::Mention,
            params: ForestParams::default(),
        }
        .fit("m", &samples);
        let per_candidate = ForestPruning {
            scope: Scope::Candidate,
            params: ForestParams::default(),
        }
        .fit("m", &samples);
        assert_eq!(acc(&per_mention), 1.0);
        // g2 and g3 are functions of the predicted sense, so a per-sense
        // constant classifier separates just as well
        assert_eq!(acc(&per_candidate), 1.0);
    }

    #[test]
    fn string_similarities() {
        let f = PruneFeatures::new("java", "Java (programming language)", 0.8);
        assert_eq!((f.g2, f.g3), (1.0, 1.0));
        let f = PruneFeatures::new("new york city", "New York", 0.8);
        assert_eq!(f.g2, 2.0);
        assert!((f.g3 - 2.0 / 3.0).abs() < 1e-15);
        let f = PruneFeatures::new("apple", "Banana", 0.8);
        assert_eq!((f.g2, f.g3), (0.0, 0.0));
    }

    #[test]
    fn registry() {
        let r = PrunerRegistry::default();
        assert_eq!(
            r.names().collect::<Vec<_>>(),
            ["forest-candidate", "forest-mention", "none", "threshold"]
        );
        let t = r.create("threshold", &PrunerOptions::default()).unwrap();
        assert_eq!(t.key(), "threshold@-0.05,-0.02");
        assert!(r.create("bogus", &PrunerOptions::default()).is_err());
    }

    fn group() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((1u32..=20, any::<bool>()), 1..12)
            .prop_map(|v| v.into_iter().map(|(g, h)| (g as f64 / 20.0, h)).unzip())
    }

    proptest! {
        #[test]
        fn selection_bounds_f_loss((g, h) in group(), b0 in -0.3f64..0.0, b1 in -0.3f64..0.0) {
            let (base, curve) = threshold_curve(&g, &h);
            let theta = fit_threshold(&g, &h, b0, b1).unwrap();
            let chosen = curve.iter().find(|k| k.theta == theta).unwrap();
            prop_assert!(chosen.f_measure >= base.f_measure + b0 - 1e-12);
            prop_assert!(g.contains(&theta));
        }

        #[test]
        fn looser_betas_reach_higher_precision((g, h) in group(), b0 in -0.3f64..0.0, b1 in -0.3f64..0.0, d in 0.0f64..0.2) {
            let best = |b0, b1| admissible(&g, &h, b0, b1).iter().map(|k| k.precision).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(best(b0 - d, b1 - d) >= best(b0, b1));
        }

        #[test]
        fn jaccard_extremes(a in prop::collection::vec("[a-c]", 1..4), b in prop::collection::vec("[d-f]", 1..4)) {
            prop_assert_eq!(jaccard(&a, &b), 0.0);
            prop_assert_eq!(jaccard(&a, &a), 1.0);
            prop_assert!(longest_common_run(&a, &a) == a.len());
        }
    }
}
