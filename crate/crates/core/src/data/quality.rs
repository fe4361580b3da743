use std::collections::HashMap;

use super::LabeledDataset;
use crate::error::{Result, ScnError};
use crate::loss::RelabelRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabelQuality {
    /// Fraction of events whose new label is the ground truth; `None`
    /// without events.
    pub precision: Option<f64>,
    /// Fraction of corrupted samples currently carrying their ground-truth
    /// label; zero when nothing was corrupted.
    pub recall: f64,
}

pub fn relabel_quality(ds: &LabeledDataset, events: &[RelabelRecord]) -> Result<RelabelQuality> {
    let by_id: HashMap<u64, usize> = ds.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut restored = 0usize;
    for e in events {
        let &i = by_id
            .get(&e.sample_id)
            .ok_or_else(|| ScnError::domain(format!("relabel event for unknown sample {}", e.sample_id)))?;
        restored += usize::from(e.new_label == ds.clean_labels()[i]);
    }
    let precision = (!events.is_empty()).then(|| restored as f64 / events.len() as f64);
    let corrupted: Vec<usize> = (0..ds.len()).filter(|&i| ds.corrupted()[i]).collect();
    let recall = if corrupted.is_empty() {
        0.0
    } else {
        let cured = corrupted
            .iter()
            .filter(|&&i| ds.current_labels()[i] == ds.clean_labels()[i])
            .count();
        cured as f64 / corrupted.len() as f64
    };
    Ok(RelabelQuality { precision, recall })
}
