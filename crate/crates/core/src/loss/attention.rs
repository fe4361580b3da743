//! Sigmoid attention head producing one importance weight per sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::tensor::{dot, Tensor2D};

/// Largest double strictly below one.
const ALPHA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
const ALPHA_MIN: f64 = f64::MIN_POSITIVE;

/// Logistic function kept inside the open interval `(0, 1)`.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    let s = if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    };
    s.clamp(ALPHA_MIN, ALPHA_MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    pub weights: Vec<f64>,
    /// Optional scalar offset; absent unless enabled at construction.
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub weights: Vec<f64>,
    pub bias: Option<f64>,
    pub features: Tensor2D,
}

impl AttentionHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, with_bias: bool, rng: &mut R) -> Self {
        let limit = 1.0 / (dim as f64).sqrt();
        Self {
            weights: (0..dim).map(|_| rng.random_range(-limit..=limit)).collect(),
            bias: with_bias.then_some(0.0),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, features: &Tensor2D) -> Result<()> {
        if features.cols() != self.dim() {
            return Err(ScnError::shape(
                "attention_weights",
                features.shape_str(),
                format!("head of dim {}", self.dim()),
            ));
        }
        if features.rows() == 0 {
            return Err(ScnError::domain("attention needs at least one sample"));
        }
        Ok(())
    }

    /// Pre-sigmoid scores `W_a . x_i (+ b)`.
    pub fn scores(&self, features: &Tensor2D) -> Result<Vec<f64>> {
        self.check(features)?;
        let b = self.bias.unwrap_or(0.0);
        Ok((0..features.rows())
            .map(|i| dot(&self.weights, features.row(i)) + b)
            .collect())
    }

    pub fn attention_weights(&self, features: &Tensor2D) -> Result<Vec<f64>> {
        Ok(self.scores(features)?.into_iter().map(sigmoid).collect())
    }

    /// Chains `dL/dalpha` through the sigmoid into the head and the features.
    pub fn backward(
        &self,
        features: &Tensor2D,
        alphas: &[f64],
        grad_alpha: &[f64],
    ) -> Result<AttentionGrads> {
        self.check(features)?;
        let n = features.rows();
        if alphas.len() != n || grad_alpha.len() != n {
            return Err(ScnError::shape(
                "attention_backward",
                format!("{n} samples"),
                format!("{} alphas, {} gradients", alphas.len(), grad_alpha.len()),
            ));
        }
        let mut weights = vec![0.0; self.dim()];
        let mut bias = 0.0;
        let mut grad_features = Tensor2D::zeros(n, self.dim());
        for i in 0..n {
            let ga = grad_alpha[i] * alphas[i] * (1.0 - alphas[i]);
            bias += ga;
            for (w, &x) in weights.iter_mut().zip(features.row(i)) {
                *w += ga * x;
            }
            for (g, &w) in grad_features.row_mut(i).iter_mut().zip(&self.weights) {
                *g = ga * w;
            }
        }
        Ok(AttentionGrads {
            weights,
            bias: self.bias.map(|_| bias),
            features: grad_features,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.weights.as_mut_slice()];
        if let Some(b) = self.bias.as_mut() {
            out.push(std::slice::from_mut(b));
        }
        out
    }
}
