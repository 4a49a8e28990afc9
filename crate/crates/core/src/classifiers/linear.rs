use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Matrix, Result};

const GRADIENT_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 5000;

/// Multinomial logistic regression: one weight row and bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    classes: Vec<usize>,
    weights: Matrix,
    bias: Vec<f64>,
    iterations: usize,
}

impl LinearModel {
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Gradient steps taken before stopping.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.classes.len() {
            let s = self.bias[c]
                + self
                    .weights
                    .row(c)
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        self.classes[best]
    }

    pub fn predict(&self, features: &Matrix) -> Vec<usize> {
        (0..features.rows())
            .map(|i| self.predict_one(features.row(i)))
            .collect()
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        if labels.len() != features.rows() || labels.is_empty() {
            return Err(Error::domain(
                "accuracy needs equally many, nonzero rows and labels",
            ));
        }
        let hits = self
            .predict(features)
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Mean cross-entropy plus `l2/2 ||W||²` and its gradient.
///
/// `params` is `[W (classes x d, row-major), b (classes)]`; `targets` are
/// class indices in `0..num_classes`.
pub fn loss_and_gradient(
    features: &Matrix,
    targets: &[usize],
    num_classes: usize,
    params: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = features.rows();
    let d = features.cols();
    let (w, b) = params.split_at(num_classes * d);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut logits = vec![0.0; num_classes];
    for i in 0..n {
        let x = features.row(i);
        for c in 0..num_classes {
            logits[c] = b[c]
                + w[c * d..(c + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target_logit = logits[targets[i]] - max;
        for l in logits.iter_mut() {
            *l = math::exp(*l - max);
        }
        let z: f64 = logits.iter().sum();
        loss += math::ln(z) - target_logit;
        for c in 0..num_classes {
            let p = logits[c] / z;
            let r = p - if c == targets[i] { 1.0 } else { 0.0 };
            for (g, v) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                *g += r * v;
            }
            grad[num_classes * d + c] += r;
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    for g in &mut grad {
        *g *= inv;
    }
    if l2 > 0.0 {
        loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad[..num_classes * d].iter_mut().zip(w) {
            *g += l2 * v;
        }
    }
    (loss, grad)
}

/// Fits multinomial logistic regression by accelerated gradient descent
/// (step `1/L` from a global curvature bound, momentum restarts) until the
/// gradient norm falls below 1e-6 or 5000 iterations pass.
pub fn train_linear(features: &Matrix, labels: &[usize], l2: f64) -> Result<LinearModel> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n {
        return Err(Error::domain(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::domain("need at least 2 rows"));
    }
    if !l2.is_finite() || l2 < 0.0 {
        return Err(Error::domain("l2 must be finite and >= 0"));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite feature"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateModel(
            "linear model needs at least 2 classes".into(),
        ));
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is a class"))
        .collect();
    let num_classes = classes.len();

    // Softmax Hessian <= ½ E[x̃ x̃ᵀ] (x̃ = [x, 1]) in the Loewner order.
    let mean_sq: f64 = (0..n)
        .map(|i| 1.0 + features.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let step = 1.0 / (0.5 * mean_sq + l2);

    let len = num_classes * (d + 1);
    let mut params = vec![0.0; len];
    let mut previous = params.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        let next_momentum = (1.0 + math::sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        let lookahead: Vec<f64> = params
            .iter()
            .zip(&previous)
            .map(|(p, q)| p + beta * (p - q))
            .collect();
        let (_, grad) = loss_and_gradient(features, &targets, num_classes, &lookahead, l2);
        let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
        iterations = it + 1;
        if norm < GRADIENT_TOLERANCE {
            params = lookahead;
            break;
        }
        let updated: Vec<f64> = lookahead
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - step * g)
            .collect();
        // Restart momentum when the step runs against the previous direction.
        let against: f64 = grad
            .iter()
            .zip(updated.iter().zip(&params))
            .map(|(g, (u, p))| g * (u - p))
            .sum();
        previous = core::mem::replace(&mut params, updated);
        momentum = if against > 0.0 { 1.0 } else { next_momentum };
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegenerateModel(
            "logistic regression diverged".into(),
        ));
    }
    let bias = params.split_off(num_classes * d);
    Ok(LinearModel {
        classes,
        weights: Matrix::from_vec(num_classes, d, params)?,
        bias,
        iterations,
    })
}
