//! Importance weighting, weighted cross-entropy, rank regularization and
//! relabeling. Every operation is a pure function of its inputs.

pub mod attention;
pub mod rank;
pub mod relabel;
pub mod wce;

use serde::{Deserialize, Serialize};

pub use attention::{sigmoid, AttentionGrads, AttentionHead};
pub use rank::{high_group_size, rank_split, rr_loss, RankSplit, RrOutput};
pub use relabel::{argmax, relabel, write_relabel_csv, RelabelEvent, RelabelOutcome, RelabelRecord};
pub use wce::{wce_loss, Classifier, WceOutput};

use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

/// `gamma * rr + (1 - gamma) * wce`.
pub fn total_loss(wce: f64, rr: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ScnError::domain(format!("gamma must be in [0,1], got {gamma}")));
    }
    Ok(gamma * rr + (1.0 - gamma) * wce)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginMode {
    Fixed,
    Learnable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub delta1: f64,
    pub mode: MarginMode,
    pub delta2: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            delta1: 0.15,
            mode: MarginMode::Fixed,
            delta2: 0.2,
        }
    }
}

impl Margins {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta1 >= 0.0 && self.delta1.is_finite()) {
            return Err(ScnError::domain(format!("delta1 must be >= 0, got {}", self.delta1)));
        }
        if !(self.delta2 >= 0.0 && self.delta2.is_finite()) {
            return Err(ScnError::domain(format!("delta2 must be >= 0, got {}", self.delta2)));
        }
        Ok(())
    }
}

/// Everything one forward pass knows about a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchState {
    pub alphas: Vec<f64>,
    pub split: Option<RankSplit>,
    /// Unscaled logits.
    pub logits: Tensor2D,
    /// Softmax of the (possibly) alpha-scaled logits.
    pub probabilities: Tensor2D,
    pub labels: Vec<usize>,
}

impl BatchState {
    pub fn high_count(&self) -> Option<usize> {
        self.split.as_ref().map(|s| s.high_count)
    }
}
