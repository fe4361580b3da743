//! Labeled datasets, synthetic blobs, label-noise injection and the dataset
//! file formats.

pub mod blobs;
pub mod io;
pub mod noise;
pub mod quality;

pub use blobs::{class_means, generate_blobs};
pub use io::{load_dataset, read_binary, read_csv, save_dataset, write_binary, write_csv};
pub use noise::{corruption_count, inject_noise, NoiseSpec};
pub use quality::{relabel_quality, RelabelQuality};

use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

/// Features plus the labels seen by training, the ground truth they came
/// from, and which samples were deliberately corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Tensor2D,
    current_labels: Vec<usize>,
    clean_labels: Vec<usize>,
    corrupted: Vec<bool>,
    classes: usize,
    ids: Vec<u64>,
}

impl LabeledDataset {
    /// A clean dataset: current labels equal ground truth, nothing corrupted.
    /// Ids default to row indices.
    pub fn new(features: Tensor2D, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let n = labels.len();
        Self::from_parts(
            features,
            labels.clone(),
            labels,
            vec![false; n],
            classes,
            (0..n as u64).collect(),
        )
    }

    pub fn from_parts(
        features: Tensor2D,
        current_labels: Vec<usize>,
        clean_labels: Vec<usize>,
        corrupted: Vec<bool>,
        classes: usize,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = features.rows();
        for (what, len) in [
            ("current labels", current_labels.len()),
            ("clean labels", clean_labels.len()),
            ("corruption mask", corrupted.len()),
            ("sample ids", ids.len()),
        ] {
            if len != n {
                return Err(ScnError::shape(
                    "dataset",
                    format!("{n} feature rows"),
                    format!("{len} {what}"),
                ));
            }
        }
        if classes < 2 {
            return Err(ScnError::domain(format!("need at least 2 classes, got {classes}")));
        }
        for (i, (&cur, &clean)) in current_labels.iter().zip(&clean_labels).enumerate() {
            if cur >= classes || clean >= classes {
                return Err(ScnError::domain(format!(
                    "sample {i}: labels ({cur}, {clean}) outside [0, {classes})"
                )));
            }
        }
        Ok(Self {
            features,
            current_labels,
            clean_labels,
            corrupted,
            classes,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor2D {
        &self.features
    }

    pub fn current_labels(&self) -> &[usize] {
        &self.current_labels
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn corrupted(&self) -> &[bool] {
        &self.corrupted
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn set_label(&mut self, index: usize, label: usize) -> Result<()> {
        if index >= self.len() || label >= self.classes {
            return Err(ScnError::domain(format!(
                "cannot set label {label} on sample {index} (n={}, C={})",
                self.len(),
                self.classes
            )));
        }
        self.current_labels[index] = label;
        Ok(())
    }

    /// Samples whose training label currently disagrees with ground truth.
    pub fn mislabeled_count(&self) -> usize {
        self.current_labels
            .iter()
            .zip(&self.clean_labels)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Per-class counts by ground-truth label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        self.clean_labels.iter().for_each(|&c| counts[c] += 1);
        counts
    }

    pub(crate) fn with_labels(&self, current: Vec<usize>, corrupted: Vec<bool>) -> Self {
        Self {
            current_labels: current,
            corrupted,
            ..self.clone()
        }
    }
}
