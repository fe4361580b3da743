//! Relabeling of low-importance samples whose prediction clearly disagrees
//! with the given label.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

/// A label change inside one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabelEvent {
    /// Row of the batch.
    pub index: usize,
    pub old_label: usize,
    pub new_label: usize,
    pub p_max: f64,
    pub p_given: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelabelOutcome {
    pub labels: Vec<usize>,
    pub events: Vec<RelabelEvent>,
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Relabels each sample in `low` to its argmax class when
/// `p_max - p_given > delta2`. Samples outside `low` are never touched.
pub fn relabel(
    probabilities: &Tensor2D,
    labels: &[usize],
    low: &[usize],
    delta2: f64,
) -> Result<RelabelOutcome> {
    let n = probabilities.rows();
    let c = probabilities.cols();
    if labels.len() != n {
        return Err(ScnError::shape(
            "relabel",
            probabilities.shape_str(),
            format!("{} labels", labels.len()),
        ));
    }
    if delta2.is_nan() || delta2 < 0.0 {
        return Err(ScnError::domain(format!("delta2 must be >= 0, got {delta2}")));
    }
    let mut out = labels.to_vec();
    let mut events = Vec::new();
    for &i in low {
        if i >= n {
            return Err(ScnError::domain(format!("index {i} outside batch of {n}")));
        }
        let given = labels[i];
        if given >= c {
            return Err(ScnError::domain(format!("label {given} outside [0, {c})")));
        }
        let row = probabilities.row(i);
        let best = argmax(row);
        let (p_max, p_given) = (row[best], row[given]);
        if p_max - p_given > delta2 {
            out[i] = best;
            events.push(RelabelEvent {
                index: i,
                old_label: given,
                new_label: best,
                p_max,
                p_given,
            });
        }
    }
    Ok(RelabelOutcome { labels: out, events })
}

/// One exported relabel event, keyed by dataset sample id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelabelRecord {
    pub epoch: usize,
    pub sample_id: u64,
    pub old_label: usize,
    pub new_label: usize,
    pub p_max: f64,
    pub p_given: f64,
}

/// CSV columns: `epoch,sample_id,old_label,new_label,p_max,p_given`.
pub fn write_relabel_csv<W: Write>(writer: W, records: &[RelabelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(["epoch", "sample_id", "old_label", "new_label", "p_max", "p_given"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
