//! Logit-weighted softmax cross-entropy.
//!
//! For sample `i` with importance `alpha_i`, unscaled logits
//! `s_ij = W_j . x_i` are scaled to `z_ij = alpha_i * s_ij` before the
//! softmax. The loss is the batch mean of `-log softmax(z_i)[y_i]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

/// Linear classifier; column `j` of `weights` scores class `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub weights: Tensor2D,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(ScnError::domain(format!("need at least 2 classes, got {classes}")));
        }
        let limit = 1.0 / (dim as f64).sqrt();
        let data = (0..dim * classes)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Ok(Self {
            weights: Tensor2D::from_vec(dim, classes, data)?,
        })
    }

    pub fn from_weights(weights: Tensor2D) -> Result<Self> {
        if weights.cols() < 2 {
            return Err(ScnError::domain(format!(
                "need at least 2 classes, got {}",
                weights.cols()
            )));
        }
        Ok(Self { weights })
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    /// Unscaled logits `features * W`.
    pub fn logits(&self, features: &Tensor2D) -> Result<Tensor2D> {
        features.matmul(&self.weights)
    }
}

#[derive(Debug, Clone)]
pub struct WceOutput {
    pub loss: f64,
    /// Unscaled logits `s`.
    pub logits: Tensor2D,
    /// Softmax of the scaled logits.
    pub probabilities: Tensor2D,
    pub grad_classifier: Tensor2D,
    pub grad_features: Tensor2D,
    /// `dL/dalpha_i`, summed over all classes.
    pub grad_scale: Vec<f64>,
}

/// Writes `softmax(scale * logits)` into `out` and returns the
/// log-normalizer relative to the row maximum.
fn scaled_softmax_row(logits: &[f64], scale: f64, out: &mut [f64]) -> (f64, f64) {
    let max = logits
        .iter()
        .map(|&s| scale * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(logits) {
        let e = (scale * s - max).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    (max, total.ln())
}

pub fn wce_loss(
    classifier: &Classifier,
    features: &Tensor2D,
    alphas: &[f64],
    labels: &[usize],
) -> Result<WceOutput> {
    let n = features.rows();
    let c = classifier.classes();
    if n == 0 {
        return Err(ScnError::domain("empty batch"));
    }
    if alphas.len() != n || labels.len() != n {
        return Err(ScnError::shape(
            "wce_loss",
            format!("{n} samples"),
            format!("{} alphas, {} labels", alphas.len(), labels.len()),
        ));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
        return Err(ScnError::domain(format!(
            "label {y} of sample {i} outside [0, {c})"
        )));
    }
    let logits = classifier.logits(features)?;
    let mut probabilities = Tensor2D::zeros(n, c);
    let mut loss = 0.0;
    for i in 0..n {
        let (max, log_norm) = scaled_softmax_row(logits.row(i), alphas[i], probabilities.row_mut(i));
        let z_y = alphas[i] * logits.get(i, labels[i]);
        loss -= z_y - max - log_norm;
    }
    if !loss.is_finite() {
        return Err(ScnError::numeric("non-finite weighted cross-entropy"));
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;

    let mut grad_scale = vec![0.0; n];
    let mut grad_logits = Tensor2D::zeros(n, c);
    for i in 0..n {
        let s_row = logits.row(i);
        let p_row = probabilities.row(i);
        let g_row = grad_logits.row_mut(i);
        for j in 0..c {
            let indicator = if j == labels[i] { 1.0 } else { 0.0 };
            let g = (p_row[j] - indicator) * inv_n;
            grad_scale[i] += g * s_row[j];
            g_row[j] = alphas[i] * g;
        }
    }
    let grad_classifier = features.transpose().matmul(&grad_logits)?;
    let grad_features = grad_logits.matmul(&classifier.weights.transpose())?;
    Ok(WceOutput {
        loss,
        logits,
        probabilities,
        grad_classifier,
        grad_features,
        grad_scale,
    })
}
