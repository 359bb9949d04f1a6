//! Micro and mention-averaged precision/recall against gold annotations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, EntityId};
use crate::text::TokenSpan;

/// One gold or predicted annotation. Predicted NILs have no sense.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labeled {
    pub doc: EntityId,
    pub span: TokenSpan,
    pub mention: String,
    pub sense: Option<EntityId>,
}

impl Labeled {
    pub fn gold(a: &Annotation) -> Self {
        Labeled {
            doc: a.containing_id,
            span: a.position,
            mention: a.mention.clone(),
            sense: Some(a.sense),
        }
    }

    pub fn predicted(a: &Annotation, sense: Option<EntityId>) -> Self {
        Labeled {
            sense,
            ..Labeled::gold(a)
        }
    }
}

/// How a mention with gold annotations but no predictions enters the
/// mention-averaged precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroPolicy {
    /// Counts in the denominator, adds 0 to the numerator.
    #[default]
    Exclude,
    /// Counts as precision 1.
    IncludeAsOne,
}

impl MacroPolicy {
    pub fn effective(self, precision: Option<f64>) -> f64 {
        precision.unwrap_or(match self {
            MacroPolicy::Exclude => 0.0,
            MacroPolicy::IncludeAsOne => 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionScore {
    pub mention: String,
    pub candidates: usize,
    /// `None` when nothing was predicted for the mention.
    pub precision: Option<f64>,
    pub recall: f64,
    pub support: usize,
    pub predicted: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    /// Summed per-annotation prediction time divided by annotation count.
    pub per_annotation_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
    pub policy: MacroPolicy,
    pub per_mention: Vec<MentionScore>,
    pub timing: Option<Timing>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Default)]
struct Counts {
    support: usize,
    predicted: usize,
    matched: usize,
}

/// Scores predictions against gold. A prediction matches when document,
/// span and sense all agree; each gold annotation matches at most once.
/// `candidates` supplies the candidate count per mention for the table.
pub fn score(
    gold: &[Labeled],
    predicted: &[Labeled],
    candidates: &BTreeMap<String, usize>,
    policy: MacroPolicy,
) -> EvalReport {
    let mut index: HashMap<(EntityId, TokenSpan), (EntityId, usize)> = HashMap::new();
    let mut per: BTreeMap<&str, Counts> = BTreeMap::new();
    for (i, g) in gold.iter().enumerate() {
        let sense = g.sense.expect("gold annotations carry a sense");
        index.entry((g.doc, g.span)).or_insert((sense, i));
        per.entry(&g.mention).or_default().support += 1;
    }
    let mut used: HashSet<usize> = HashSet::new();
    let (mut n_pred, mut n_match) = (0, 0);
    for p in predicted {
        let Some(sense) = p.sense else { continue };
        n_pred += 1;
        let c = per.entry(&p.mention).or_default();
        c.predicted += 1;
        if let Some(&(gs, gi)) = index.get(&(p.doc, p.span)) {
            if gs == sense && used.insert(gi) {
                n_match += 1;
                per.get_mut(gold[gi].mention.as_str()).unwrap().matched += 1;
            }
        }
    }
    let per_mention: Vec<MentionScore> = per
        .into_iter()
        .map(|(m, c)| MentionScore {
            mention: m.to_string(),
            candidates: candidates.get(m).copied().unwrap_or(1),
            precision: (c.predicted > 0).then(|| ratio(c.matched, c.predicted)),
            recall: ratio(c.matched, c.support),
            support: c.support,
            predicted: c.predicted,
            matched: c.matched,
        })
        .collect();
    let in_gold: Vec<&MentionScore> = per_mention.iter().filter(|m| m.support > 0).collect();
    let n = in_gold.len();
    let macro_precision = if n == 0 {
        0.0
    } else {
        in_gold.iter().map(|m| policy.effective(m.precision)).sum::<f64>() / n as f64
    };
    let macro_recall = if n == 0 {
        0.0
    } else {
        in_gold.iter().map(|m| m.recall).sum::<f64>() / n as f64
    };
    let p = ratio(n_match, n_pred);
    let r = ratio(n_match, gold.len());
    EvalReport {
        micro_precision: p,
        micro_recall: r,
        micro_f: harmonic(p, r),
        macro_precision,
        macro_recall,
        gold: gold.len(),
        predicted: n_pred,
        matched: n_match,
        policy,
        per_mention,
        timing: None,
    }
}

impl EvalReport {
    /// Plain-text summary followed by the per-mention table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "gold {}  predicted {}  matched {}",
            self.gold, self.predicted, self.matched
        );
        let _ = writeln!(
            s,
            "micro  P {:.4}  R {:.4}  F {:.4}",
            self.micro_precision, self.micro_recall, self.micro_f
        );
        let _ = writeln!(s, "macro  P {:.4}  R {:.4}", self.macro_precision, self.macro_recall);
        if let Some(t) = &self.timing {
            let _ = writeln!(
                s,
                "time   total {:.3}s  per annotation {:.4}ms",
                t.total_secs, t.per_annotation_ms
            );
        }
        let _ = writeln!(
            s,
            "\n{:<32} {:>4} {:>8} {:>8} {:>8}",
            "mention", "|e|", "P", "R", "support"
        );
        for m in &self.per_mention {
            let p = m.precision.map_or("-".to_string(), |p| format!("{p:.4}"));
            let _ = writeln!(
                s,
                "{:<32} {:>4} {:>8} {:>8.4} {:>8}",
                m.mention, m.candidates, p, m.recall, m.support
            );
        }
        s
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionBand {
    pub candidates: usize,
    pub mentions: usize,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Per-mention precision bucketed by candidate count.
pub fn precision_vs_candidates(report: &EvalReport) -> Vec<PrecisionBand> {
    let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for m in report.per_mention.iter().filter(|m| m.support > 0) {
        buckets
            .entry(m.candidates)
            .or_default()
            .push(report.policy.effective(m.precision));
    }
    buckets
        .into_iter()
        .map(|(candidates, mut v)| {
            v.sort_by(f64::total_cmp);
            PrecisionBand {
                candidates,
                mentions: v.len(),
                q05: quantile(&v, 0.05),
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
                q95: quantile(&v, 0.95),
            }
        })
        .collect()
}

pub fn bands_csv(bands: &[PrecisionBand]) -> String {
    let mut s = String::from("candidates,mentions,q05,q25,median,q75,q95\n");
    for b in bands {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            b.candidates, b.mentions, b.q05, b.q25, b.median, b.q75, b.q95
        );
    }
    s
}
