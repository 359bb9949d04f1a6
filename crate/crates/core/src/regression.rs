//! Multinomial logistic (softmax) regression.
//!
//! Weights are a row-major `classes × (1 + dim)` matrix whose first column
//! is the bias. The training objective is the mean negative log-likelihood
//! plus `l2 / 2 · ‖W‖²` over the non-bias weights, minimized by full-batch
//! gradient descent with an Armijo backtracking line search. The descent
//! direction is the gradient scaled per feature by `1 / max(1, mean x²)`,
//! which keeps large-valued similarity features from dictating the step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient max-norm falls below this.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-4,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln()
}

/// Affine class scores `μ_i = w_i0 + Σ_k w_ik x_k`.
pub fn scores(weights: &[f64], classes: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len() + 1;
    debug_assert_eq!(weights.len(), classes * cols);
    (0..classes)
        .map(|c| {
            let row = &weights[c * cols..(c + 1) * cols];
            row[0] + row[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Training data: one feature row per sample, all of equal length.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Samples {
            dim,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: Vec<f64>, y: usize) {
        debug_assert_eq!(x.len(), self.dim);
        self.features.push(x);
        self.labels.push(y);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Regularized mean NLL.
pub fn objective(weights: &[f64], classes: usize, data: &Samples, l2: f64) -> f64 {
    let cols = data.dim + 1;
    let n = data.len().max(1) as f64;
    let mut nll = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let mu = scores(weights, classes, x);
        nll += log_sum_exp(&mu) - mu[y];
    }
    let reg: f64 = (0..classes)
        .flat_map(|c| weights[c * cols + 1..(c + 1) * cols].iter())
        .map(|w| w * w)
        .sum();
    nll / n + 0.5 * l2 * reg
}

/// Objective and its analytic gradient.
pub fn objective_and_gradient(weights: &[f64], classes: usize, data: &Samples, l2: f64) -> (f64, Vec<f64>) {
    let cols = data.dim + 1;
    let n = data.len().max(1) as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut nll = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let mu = scores(weights, classes, x);
        nll += log_sum_exp(&mu) - mu[y];
        let p = softmax(&mu);
        for c in 0..classes {
            let r = p[c] - if c == y { 1.0 } else { 0.0 };
            if r == 0.0 {
                continue;
            }
            let row = &mut grad[c * cols..(c + 1) * cols];
            row[0] += r;
            for (g, v) in row[1..].iter_mut().zip(x) {
                *g += r * v;
            }
        }
    }
    let mut reg = 0.0;
    for c in 0..classes {
        for k in 1..cols {
            let i = c * cols + k;
            grad[i] /= n;
            grad[i] += l2 * weights[i];
            reg += weights[i] * weights[i];
        }
        grad[c * cols] /= n;
    }
    (nll / n + 0.5 * l2 * reg, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    /// Objective after each accepted step, starting with the initial value.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Fits weights from all-zero initialization.
pub fn fit(classes: usize, data: &Samples, config: &TrainConfig) -> (Vec<f64>, TrainReport) {
    let cols = data.dim + 1;
    let mut w = vec![0.0; classes * cols];
    let n = data.len().max(1) as f64;
    let mut scale = vec![1.0; cols];
    for k in 1..cols {
        let m: f64 = data.features.iter().map(|x| x[k - 1] * x[k - 1]).sum::<f64>() / n;
        scale[k] = 1.0 / m.max(1.0);
    }

    let (mut f, mut g) = objective_and_gradient(&w, classes, data, config.l2);
    let mut history = vec![f];
    let mut step: f64 = 0.5;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < config.tol {
            break;
        }
        let dir: Vec<f64> = g.iter().enumerate().map(|(i, gi)| -gi * scale[i % cols]).collect();
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut t = (step * 2.0).min(1e6);
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let ft = objective(&trial, classes, data, config.l2);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        if ft > f {
            break;
        }
        step = t;
        w = trial;
        let (nf, ng) = objective_and_gradient(&w, classes, data, config.l2);
        debug_assert!((nf - ft).abs() <= 1e-9 * ft.abs().max(1.0));
        f = nf;
        g = ng;
        history.push(f);
        iterations += 1;
    }
    let gradient_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (
        w,
        TrainReport {
            iterations,
            objective: f,
            gradient_norm,
            history,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_instance(rng: &mut SplitMix64, classes: usize, dim: usize, n: usize) -> (Vec<f64>, Samples) {
        let mut data = Samples::new(dim);
        for _ in 0..n {
            let x = (0..dim).map(|_| rng.unit() * 4.0 - 2.0).collect();
            data.push(x, rng.below(classes));
        }
        let w = (0..classes * (dim + 1)).map(|_| rng.unit() * 2.0 - 1.0).collect();
        (w, data)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SplitMix64::new(42);
        for _ in 0..5 {
            let classes = 2 + rng.below(4);
            let dim = 1 + rng.below(10);
            let (w, data) = random_instance(&mut rng, classes, dim, 12);
            let (_, g) = objective_and_gradient(&w, classes, &data, 0.01);
            let h = 1e-5;
            for i in 0..w.len() {
                let mut a = w.clone();
                let mut b = w.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (objective(&a, classes, &data, 0.01) - objective(&b, classes, &data, 0.01)) / (2.0 * h);
                let err = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-3);
                assert!(err < 1e-5, "component {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn softmax_limits() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0, 0.0]), vec![0.25; 4]);
        let p = softmax(&[0.0, 100.0, 0.0]);
        assert!(p[1] > 1.0 - 1e-9);
        let p = softmax(&[1e4, -1e4, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
    }

    #[test]
    fn separable_two_class() {
        let mut data = Samples::new(1);
        for i in 0..20 {
            let x = i as f64 / 10.0 - 1.0 + 0.05;
            data.push(vec![x], (x > 0.0) as usize);
        }
        let (w, _) = fit(2, &data, &TrainConfig::default());
        for (x, &y) in data.features.iter().zip(&data.labels) {
            assert_eq!(argmax(&scores(&w, 2, x)), y);
        }
    }

    #[test]
    fn zero_features_learn_class_frequencies() {
        let mut data = Samples::new(3);
        let labels = [0, 0, 0, 0, 0, 1, 1, 2, 2, 2];
        for &y in &labels {
            data.push(vec![0.0; 3], y);
        }
        let (w, report) = fit(3, &data, &TrainConfig::default());
        let p = softmax(&scores(&w, 3, &[0.0; 3]));
        for (c, expect) in [0.5, 0.2, 0.3].iter().enumerate() {
            assert!((p[c] - expect).abs() < 1e-3, "{p:?}");
        }
        assert!(report.gradient_norm < 1e-6);
    }

    #[test]
    fn nested_model_does_at_least_as_well_as_bias_only() {
        let mut rng = SplitMix64::new(9);
        let mut data = Samples::new(2);
        for _ in 0..30 {
            let y = rng.below(3);
            let x = vec![y as f64 + rng.unit(), rng.unit()];
            data.push(x, y);
        }
        let cfg = TrainConfig::default();
        let (w, report) = fit(3, &data, &cfg);
        let mut bias_only = Samples::new(2);
        for &y in &data.labels {
            bias_only.push(vec![0.0, 0.0], y);
        }
        let (wb, _) = fit(3, &bias_only, &cfg);
        let nll_full = objective(&w, 3, &data, 0.0);
        let nll_bias = objective(&wb, 3, &data, 0.0);
        assert!(nll_full <= nll_bias + 1e-12);
        for pair in report.history.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }
}
