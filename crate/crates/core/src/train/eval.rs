//! Inference-time evaluation on unscaled logits.

use super::model::ScnModel;
use crate::data::LabeledDataset;
use crate::error::{Result, ScnError};
use crate::loss::argmax;
use crate::parallel::{self, Execution};
use crate::tensor::Tensor2D;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean over classes present in the set of per-class accuracy.
    pub mean_class_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(EVAL_CHUNK).map(|s| (s, (s + EVAL_CHUNK).min(n))).collect()
}

fn rows(features: &Tensor2D, (start, end): (usize, usize)) -> Tensor2D {
    let idx: Vec<usize> = (start..end).collect();
    features.select_rows(&idx)
}

pub fn predict(model: &ScnModel, features: &Tensor2D, exec: Execution) -> Result<Vec<usize>> {
    let chunks = parallel::try_map(&chunk_ranges(features.rows()), exec, |&r| {
        let logits = model.predict_logits(&rows(features, r))?;
        Ok::<_, ScnError>((0..logits.rows()).map(|i| argmax(logits.row(i))).collect::<Vec<_>>())
    })?;
    Ok(chunks.concat())
}

pub fn predict_alphas(model: &ScnModel, features: &Tensor2D, exec: Execution) -> Result<Vec<f64>> {
    let chunks = parallel::try_map(&chunk_ranges(features.rows()), exec, |&r| {
        model.predict_alphas(&rows(features, r))
    })?;
    Ok(chunks.concat())
}

/// Scores predictions against ground-truth labels.
pub fn evaluate_with(model: &ScnModel, ds: &LabeledDataset, exec: Execution) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(ScnError::domain("cannot evaluate on an empty dataset"));
    }
    if ds.classes() != model.classes() {
        return Err(ScnError::shape(
            "evaluate",
            format!("{} dataset classes", ds.classes()),
            format!("{} model classes", model.classes()),
        ));
    }
    let predicted = predict(model, ds.features(), exec)?;
    Ok(score(&predicted, ds.clean_labels(), ds.classes()))
}

pub fn evaluate(model: &ScnModel, ds: &LabeledDataset) -> Result<Evaluation> {
    evaluate_with(model, ds, Execution::default())
}

pub fn score(predicted: &[usize], truth: &[usize], classes: usize) -> Evaluation {
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter_map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        mean_class_accuracy: per_class.iter().sum::<f64>() / per_class.len() as f64,
        confusion,
    }
}
