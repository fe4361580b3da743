//! The training loop.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ScnConfig;
use super::eval::{evaluate_with, predict_alphas};
use super::model::{ModelGrads, Objective, ScnModel};
use crate::data::LabeledDataset;
use crate::error::{Result, ScnError};
use crate::loss::{argmax, relabel, RelabelRecord};
use crate::optim::SgdOptimizer;
use crate::parallel::Execution;

/// Mini-batch visiting order for one epoch: a seeded Fisher-Yates shuffle
/// on an independent ChaCha stream per epoch.
pub fn epoch_order(shuffle_seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub delta1: f64,
    pub loss_wce: f64,
    pub loss_rr: Option<f64>,
    pub loss_total: f64,
    /// Against the labels used for training at the time of each batch.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub test_mean_class_accuracy: Option<f64>,
    /// Mean alpha over training samples whose current label is correct.
    pub alpha_clean: Option<f64>,
    /// Mean alpha over training samples whose current label is wrong.
    pub alpha_mislabeled: Option<f64>,
    /// Mean alpha over samples hit by noise injection, cured or not.
    pub alpha_injected: Option<f64>,
    pub relabel_events: usize,
    pub relabel_precision: Option<f64>,
    pub relabel_recall: f64,
    /// Fraction of training labels that currently disagree with ground truth.
    pub label_noise: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: [&'static str; 16] = [
        "epoch",
        "lr",
        "delta1",
        "loss_wce",
        "loss_rr",
        "loss_total",
        "train_accuracy",
        "test_accuracy",
        "test_mean_class_accuracy",
        "alpha_clean",
        "alpha_mislabeled",
        "alpha_injected",
        "relabel_events",
        "relabel_precision",
        "relabel_recall",
        "label_noise",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.epoch.to_string(),
            self.lr.to_string(),
            self.delta1.to_string(),
            self.loss_wce.to_string(),
            opt(self.loss_rr),
            self.loss_total.to_string(),
            self.train_accuracy.to_string(),
            opt(self.test_accuracy),
            opt(self.test_mean_class_accuracy),
            opt(self.alpha_clean),
            opt(self.alpha_mislabeled),
            opt(self.alpha_injected),
            self.relabel_events.to_string(),
            opt(self.relabel_precision),
            self.relabel_recall.to_string(),
            self.label_noise.to_string(),
        ]
    }
}

pub fn write_metrics_csv<W: Write>(writer: W, trace: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EpochMetrics::CSV_HEADER)?;
    for m in trace {
        w.write_record(m.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSummary {
    pub clean: Option<f64>,
    pub mislabeled: Option<f64>,
    pub injected: Option<f64>,
}

pub fn alpha_summary(model: &ScnModel, ds: &LabeledDataset, exec: Execution) -> Result<AlphaSummary> {
    let alphas = predict_alphas(model, ds.features(), exec)?;
    let wrong = |i: usize| ds.current_labels()[i] != ds.clean_labels()[i];
    Ok(AlphaSummary {
        clean: mean((0..ds.len()).filter(|&i| !wrong(i)).map(|i| alphas[i])),
        mislabeled: mean((0..ds.len()).filter(|&i| wrong(i)).map(|i| alphas[i])),
        injected: mean((0..ds.len()).filter(|&i| ds.corrupted()[i]).map(|i| alphas[i])),
    })
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub metrics: EpochMetrics,
    pub relabels: Vec<RelabelRecord>,
}

/// Model plus optimizer state for one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ScnModel,
    optimizer: SgdOptimizer,
    config: ScnConfig,
    exec: Execution,
}

impl Trainer {
    pub fn new(model: ScnModel, config: &ScnConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = SgdOptimizer::new(config.schedule.clone(), config.momentum, config.weight_decay)?;
        Ok(Self {
            model,
            optimizer,
            config: config.clone(),
            exec: Execution::default(),
        })
    }

    /// Execution mode for the read-only evaluation passes.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &ScnConfig {
        &self.config
    }

    fn uses_attention(&self) -> bool {
        self.config.modules.weighting || self.config.modules.rank_reg
    }

    fn learns_delta1(&self) -> bool {
        self.config.delta1_learnable() && self.config.modules.rank_reg
    }

    fn apply(&mut self, grads: &ModelGrads, epoch: usize) -> Result<()> {
        let uses_attention = self.uses_attention();
        let learns_delta1 = self.learns_delta1();
        let ScnModel {
            backbone,
            attention,
            classifier,
            delta1,
        } = &mut self.model;

        let mut params = backbone.params_mut();
        params.push(classifier.weights.as_mut_slice());
        let mut g = grads.backbone.as_slices();
        g.push(grads.classifier.as_slice());
        if uses_attention {
            let ag = grads
                .attention
                .as_ref()
                .ok_or_else(|| ScnError::State("missing attention gradients".into()))?;
            params.extend(attention.params_mut());
            g.push(&ag.weights);
            if let Some(b) = &ag.bias {
                g.push(std::slice::from_ref(b));
            }
        }
        if learns_delta1 {
            params.push(std::slice::from_mut(delta1));
            g.push(std::slice::from_ref(&grads.delta1));
        }
        self.optimizer.step(&mut params, &g, epoch)?;
        if learns_delta1 {
            *delta1 = delta1.max(0.0);
        }
        Ok(())
    }

    /// One pass over `ds` in seeded mini-batches. Relabeling, when enabled
    /// and past the start epoch, rewrites `ds`'s current labels in place.
    pub fn train_epoch(
        &mut self,
        ds: &mut LabeledDataset,
        test: Option<&LabeledDataset>,
        epoch: usize,
    ) -> Result<EpochReport> {
        if ds.is_empty() {
            return Err(ScnError::domain("cannot train on an empty dataset"));
        }
        if ds.dim() != self.model.input_dim() || ds.classes() != self.model.classes() {
            return Err(ScnError::shape(
                "train_epoch",
                format!("dataset dim {} / {} classes", ds.dim(), ds.classes()),
                format!("model dim {} / {} classes", self.model.input_dim(), self.model.classes()),
            ));
        }
        let cfg = self.config.clone();
        let obj = Objective::from_config(&cfg);
        let relabel_now = cfg.modules.relabel && epoch >= cfg.relabel_start_epoch;
        let order = epoch_order(cfg.shuffle_seed, epoch, ds.len());

        let (mut wce_sum, mut total_sum, mut batches) = (0.0, 0.0, 0usize);
        let (mut rr_sum, mut rr_batches) = (0.0, 0usize);
        let mut correct = 0usize;
        let mut relabels = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = ds.features().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.current_labels()[i]).collect();
            let (state, losses, grads) = self.model.batch_gradients(&inputs, &labels, obj)?;
            wce_sum += losses.wce;
            total_sum += losses.total;
            batches += 1;
            if let Some(rr) = losses.rr {
                rr_sum += rr;
                rr_batches += 1;
            }
            correct += (0..chunk.len())
                .filter(|&k| argmax(state.logits.row(k)) == labels[k])
                .count();
            self.apply(&grads, epoch)?;

            if relabel_now {
                if let Some(split) = &state.split {
                    let out = relabel(&state.probabilities, &labels, split.low(), cfg.margins.delta2)?;
                    for ev in out.events {
                        let i = chunk[ev.index];
                        ds.set_label(i, ev.new_label)?;
                        relabels.push(RelabelRecord {
                            epoch,
                            sample_id: ds.ids()[i],
                            old_label: ev.old_label,
                            new_label: ev.new_label,
                            p_max: ev.p_max,
                            p_given: ev.p_given,
                        });
                    }
                }
            }
        }

        let by_id: std::collections::HashMap<u64, usize> =
            ds.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let precision = mean(relabels.iter().map(|r| {
            let i = by_id[&r.sample_id];
            f64::from(u8::from(r.new_label == ds.clean_labels()[i]))
        }));
        let quality = crate::data::relabel_quality(ds, &[])?;
        let alphas = alpha_summary(&self.model, ds, self.exec)?;
        let test_eval = test.map(|t| evaluate_with(&self.model, t, self.exec)).transpose()?;
        let metrics = EpochMetrics {
            epoch,
            lr: self.optimizer.lr_at(epoch),
            delta1: self.model.delta1,
            loss_wce: wce_sum / batches as f64,
            loss_rr: (rr_batches > 0).then(|| rr_sum / rr_batches as f64),
            loss_total: total_sum / batches as f64,
            train_accuracy: correct as f64 / ds.len() as f64,
            test_accuracy: test_eval.as_ref().map(|e| e.accuracy),
            test_mean_class_accuracy: test_eval.as_ref().map(|e| e.mean_class_accuracy),
            alpha_clean: alphas.clean,
            alpha_mislabeled: alphas.mislabeled,
            alpha_injected: alphas.injected,
            relabel_events: relabels.len(),
            relabel_precision: precision,
            relabel_recall: quality.recall,
            label_noise: ds.mislabeled_count() as f64 / ds.len() as f64,
        };
        Ok(EpochReport { metrics, relabels })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ScnModel,
    pub trace: Vec<EpochMetrics>,
    pub relabels: Vec<RelabelRecord>,
}

/// Runs `config.epochs` epochs from `model`.
pub fn train(
    model: ScnModel,
    ds: &mut LabeledDataset,
    test: Option<&LabeledDataset>,
    config: &ScnConfig,
) -> Result<TrainOutcome> {
    train_with(model, ds, test, config, Execution::default())
}

pub fn train_with(
    model: ScnModel,
    ds: &mut LabeledDataset,
    test: Option<&LabeledDataset>,
    config: &ScnConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, config)?.with_execution(exec);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut relabels = Vec::new();
    for epoch in 0..config.epochs {
        let report = trainer.train_epoch(ds, test, epoch)?;
        trace.push(report.metrics);
        relabels.extend(report.relabels);
    }
    Ok(TrainOutcome {
        model: trainer.model,
        trace,
        relabels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, inject_noise, NoiseSpec};
    use crate::loss::MarginMode;
    use crate::train::ModuleSwitches;

    fn small_config() -> ScnConfig {
        ScnConfig {
            epochs: 4,
            relabel_start_epoch: 2,
            batch_size: 16,
            hidden: vec![8],
            feature_dim: 6,
            ..ScnConfig::default()
        }
    }

    fn noisy(seed: u64) -> LabeledDataset {
        let ds = generate_blobs(3, 30, 4, 0.3, seed).unwrap();
        inject_noise(&ds, NoiseSpec { ratio: 0.3, seed }).unwrap()
    }

    #[test]
    fn epoch_order_is_a_permutation() {
        let mut o = epoch_order(3, 5, 50);
        assert_ne!(o, epoch_order(3, 6, 50));
        assert_eq!(o, epoch_order(3, 5, 50));
        o.sort_unstable();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = ScnConfig { epochs: 0, relabel_start_epoch: 0, ..small_config() };
        let mut ds = noisy(1);
        let model = ScnModel::new(4, 3, &cfg).unwrap();
        let out = train(model.clone(), &mut ds, None, &cfg).unwrap();
        assert_eq!(out.model, model);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn no_relabels_before_start_epoch() {
        let cfg = ScnConfig { margins: crate::loss::Margins { delta2: 0.0, ..Default::default() }, ..small_config() };
        let mut ds = noisy(2);
        let out = train(ScnModel::new(4, 3, &cfg).unwrap(), &mut ds, None, &cfg).unwrap();
        assert!(out.relabels.iter().all(|r| r.epoch >= cfg.relabel_start_epoch));
        assert_eq!(out.trace[0].relabel_events, 0);
        assert_eq!(out.trace[1].relabel_events, 0);
    }

    #[test]
    fn deterministic_traces() {
        let cfg = small_config();
        let run = || {
            let mut ds = noisy(3);
            train(ScnModel::new(4, 3, &cfg).unwrap(), &mut ds, None, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        assert_eq!(a.relabels, b.relabels);
    }

    #[test]
    fn fixed_delta1_never_moves_and_learnable_stays_non_negative() {
        let cfg = small_config();
        let mut ds = noisy(4);
        let out = train(ScnModel::new(4, 3, &cfg).unwrap(), &mut ds, None, &cfg).unwrap();
        assert!(out.trace.iter().all(|m| m.delta1 == 0.15));

        let learn = ScnConfig {
            margins: crate::loss::Margins { mode: MarginMode::Learnable, delta1: 0.01, ..Default::default() },
            gamma: 0.9,
            schedule: crate::optim::StepDecay { base_lr: 0.5, ..Default::default() },
            ..small_config()
        };
        let mut ds = noisy(4);
        let out = train(ScnModel::new(4, 3, &learn).unwrap(), &mut ds, None, &learn).unwrap();
        assert!(out.trace.iter().all(|m| m.delta1 >= 0.0));
        assert!(out.trace.last().unwrap().delta1 < 0.01);
    }

    #[test]
    fn single_sample_tail_batch_is_handled() {
        let cfg = ScnConfig { batch_size: 89, ..small_config() };
        let mut ds = noisy(5);
        assert_eq!(ds.len() % 89, 1);
        let out = train(ScnModel::new(4, 3, &cfg).unwrap(), &mut ds, None, &cfg).unwrap();
        assert_eq!(out.trace.len(), 4);
        let all_off = ScnConfig { modules: ModuleSwitches::NONE, ..cfg };
        let mut ds = noisy(5);
        train(ScnModel::new(4, 3, &all_off).unwrap(), &mut ds, None, &all_off).unwrap();
    }

    #[test]
    fn metric_ranges() {
        let cfg = small_config();
        let mut ds = noisy(6);
        let test = generate_blobs(3, 10, 4, 0.3, 99).unwrap();
        let out = train(ScnModel::new(4, 3, &cfg).unwrap(), &mut ds, Some(&test), &cfg).unwrap();
        for m in &out.trace {
            assert!((0.0..=1.0).contains(&m.train_accuracy));
            let t = m.test_accuracy.unwrap();
            assert!((0.0..=1.0).contains(&t));
            assert!((0.0..=1.0).contains(&m.relabel_recall));
        }
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &out.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("epoch,lr,delta1,"));
    }
}
