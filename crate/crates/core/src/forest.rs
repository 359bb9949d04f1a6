//! Binary random forest: CART trees on Gini impurity, bootstrap rows,
//! per-node feature subsampling.

use serde::{Deserialize, Serialize};

use crate::rng::{mix, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 30,
            max_depth: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Fraction of positive training rows in the reached leaf.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub features: usize,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    max_depth: usize,
    try_features: usize,
    rng: SplitMix64,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let n = rows.len();
        let total_pos = rows.iter().filter(|&&r| self.y[r]).count();
        let parent = gini(total_pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        // a full permutation: the first `try_features` are the subsample, the
        // rest are only consulted when the subsample has no valid split
        let order = self.rng.sample_indices(d, d);
        for (tried, &feature) in order.iter().enumerate() {
            if tried >= self.try_features && best.is_some() {
                break;
            }
            let mut sorted: Vec<usize> = rows.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                if self.y[sorted[i]] {
                    left_pos += 1;
                }
                let (lo, hi) = (self.x[sorted[i]][feature], self.x[sorted[i + 1]][feature]);
                if lo == hi {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                let impurity = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(total_pos - left_pos, nr)) / n as f64;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let p = pos as f64 / rows.len().max(1) as f64;
        self.nodes.push(Node::Leaf(p));
        if depth >= self.max_depth || pos == 0 || pos == rows.len() || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl RandomForest {
    /// Needs at least one row; all rows share one width.
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: &ForestParams) -> Self {
        assert!(!x.is_empty() && x.len() == y.len());
        let d = x[0].len();
        let try_features = ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1));
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = SplitMix64::new(mix(params.seed, t as u64));
                let rows: Vec<usize> = (0..x.len()).map(|_| rng.below(x.len())).collect();
                let mut b = Builder {
                    x,
                    y,
                    max_depth: params.max_depth,
                    try_features,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(&rows, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        RandomForest { trees, features: d }
    }

    /// Mean of the per-tree leaf probabilities.
    pub fn probability(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) >= 0.5
    }
}
