//! Paired baseline-versus-full runs over noise levels and seeds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ScnConfig;
use super::model::ScnModel;
use super::trainer::{train_with, EpochMetrics};
use crate::data::{generate_blobs, inject_noise, LabeledDataset, NoiseSpec};
use crate::error::{Result, ScnError};
use crate::loss::RelabelRecord;
use crate::parallel::{self, Execution};

/// Synthetic train/test generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            train_per_class: 250,
            test_per_class: 100,
            dim: 16,
            spread: DEFAULT_SPREAD,
        }
    }
}

/// Blob standard deviation for the default experiment (means are one unit
/// apart).
pub const DEFAULT_SPREAD: f64 = 0.3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seeds for every random stage of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub train_data: u64,
    pub test_data: u64,
    pub noise: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl RunSeeds {
    pub fn derive(base: u64) -> Self {
        let s = |tag: u64| splitmix(base ^ splitmix(tag));
        Self {
            train_data: s(1),
            test_data: s(2),
            noise: s(3),
            init: s(4),
            shuffle: s(5),
        }
    }
}

/// Clean test set plus a training set with `noise` injected.
pub fn prepare_data(spec: &DataSpec, noise: f64, seeds: &RunSeeds) -> Result<(LabeledDataset, LabeledDataset)> {
    let clean = generate_blobs(spec.classes, spec.train_per_class, spec.dim, spec.spread, seeds.train_data)?;
    let train_set = inject_noise(&clean, NoiseSpec { ratio: noise, seed: seeds.noise })?;
    let test_set = generate_blobs(spec.classes, spec.test_per_class, spec.dim, spec.spread, seeds.test_data)?;
    Ok((train_set, test_set))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub variant: String,
    pub noise: f64,
    pub seed: u64,
    pub test_accuracy: f64,
    pub test_mean_class_accuracy: f64,
    pub alpha_clean: Option<f64>,
    pub alpha_mislabeled: Option<f64>,
    pub alpha_injected: Option<f64>,
    pub relabel_events: usize,
    pub relabel_precision: Option<f64>,
    pub relabel_recall: f64,
    pub final_delta1: f64,
    #[serde(skip)]
    pub trace: Vec<EpochMetrics>,
    #[serde(skip)]
    pub relabels: Vec<RelabelRecord>,
}

impl RunResult {
    /// `alpha_clean - alpha_mislabeled` at the end of training.
    pub fn alpha_separation(&self) -> Option<f64> {
        Some(self.alpha_clean? - self.alpha_mislabeled?)
    }
}

/// Trains one configuration on the data derived from `seed`.
pub fn run_variant(
    variant: &str,
    data: &DataSpec,
    config: &ScnConfig,
    noise: f64,
    seed: u64,
) -> Result<RunResult> {
    let seeds = RunSeeds::derive(seed);
    let (mut train_set, test_set) = prepare_data(data, noise, &seeds)?;
    let cfg = ScnConfig {
        init_seed: seeds.init,
        shuffle_seed: seeds.shuffle,
        ..config.clone()
    };
    let model = ScnModel::new(data.dim, data.classes, &cfg)?;
    // runs are already fanned out; keep evaluation inside each run serial
    let out = train_with(model, &mut train_set, Some(&test_set), &cfg, Execution::Sequential)?;
    let quality = crate::data::relabel_quality(&train_set, &out.relabels)?;
    let last = out.trace.last();
    Ok(RunResult {
        variant: variant.to_string(),
        noise,
        seed,
        test_accuracy: last.and_then(|m| m.test_accuracy).unwrap_or(0.0),
        test_mean_class_accuracy: last.and_then(|m| m.test_mean_class_accuracy).unwrap_or(0.0),
        alpha_clean: last.and_then(|m| m.alpha_clean),
        alpha_mislabeled: last.and_then(|m| m.alpha_mislabeled),
        alpha_injected: last.and_then(|m| m.alpha_injected),
        relabel_events: out.relabels.len(),
        relabel_precision: quality.precision,
        relabel_recall: quality.recall,
        final_delta1: out.model.delta1,
        trace: out.trace,
        relabels: out.relabels,
    })
}

/// Runs every `(variant, noise, seed)` job, fanned out by `exec`.
pub fn run_jobs(
    data: &DataSpec,
    jobs: &[(String, ScnConfig, f64, u64)],
    exec: Execution,
) -> Result<Vec<RunResult>> {
    parallel::try_map(jobs, exec, |(name, cfg, noise, seed)| run_variant(name, data, cfg, *noise, *seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSpec {
    pub data: DataSpec,
    pub config: ScnConfig,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            config: ScnConfig::default(),
            noise_levels: vec![0.1, 0.2, 0.3],
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub noise: f64,
    pub seeds: usize,
    pub baseline_mean_accuracy: f64,
    pub scn_mean_accuracy: f64,
    pub delta: f64,
    /// Seeds on which the full model beats the paired baseline strictly.
    pub scn_wins: usize,
    pub alpha_separation_mean: Option<f64>,
    /// Seeds on which mislabeled samples end with lower mean alpha.
    pub alpha_separated_seeds: usize,
    pub relabel_precision_mean: Option<f64>,
    pub relabel_recall_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparePair {
    pub baseline: RunResult,
    pub scn: RunResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub levels: Vec<LevelSummary>,
    pub pairs: Vec<ComparePair>,
}

pub(crate) fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Baseline (all mechanisms off) and the configured model trained from
/// identical initial weights and data order at every noise level and seed.
pub fn compare(spec: &CompareSpec, exec: Execution) -> Result<CompareReport> {
    spec.config.validate()?;
    if spec.seeds.is_empty() || spec.noise_levels.is_empty() {
        return Err(ScnError::domain("compare needs at least one seed and one noise level"));
    }
    if let Some(r) = spec.noise_levels.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(ScnError::domain(format!("noise ratio must be in [0,1), got {r}")));
    }
    let baseline = spec.config.baseline();
    let mut jobs = Vec::new();
    for &noise in &spec.noise_levels {
        for &seed in &spec.seeds {
            jobs.push(("baseline".to_string(), baseline.clone(), noise, seed));
            jobs.push(("scn".to_string(), spec.config.clone(), noise, seed));
        }
    }
    let mut results = run_jobs(&spec.data, &jobs, exec)?.into_iter();
    let mut pairs = Vec::new();
    while let (Some(baseline), Some(scn)) = (results.next(), results.next()) {
        pairs.push(ComparePair { baseline, scn });
    }
    let levels = spec
        .noise_levels
        .iter()
        .map(|&noise| {
            let at: Vec<&ComparePair> = pairs.iter().filter(|p| p.scn.noise == noise).collect();
            let base: Vec<f64> = at.iter().map(|p| p.baseline.test_accuracy).collect();
            let full: Vec<f64> = at.iter().map(|p| p.scn.test_accuracy).collect();
            let seps: Vec<f64> = at.iter().filter_map(|p| p.scn.alpha_separation()).collect();
            let precs: Vec<f64> = at.iter().filter_map(|p| p.scn.relabel_precision).collect();
            let recalls: Vec<f64> = at.iter().map(|p| p.scn.relabel_recall).collect();
            let (b, s) = (mean_of(&base).unwrap_or(0.0), mean_of(&full).unwrap_or(0.0));
            LevelSummary {
                noise,
                seeds: at.len(),
                baseline_mean_accuracy: b,
                scn_mean_accuracy: s,
                delta: s - b,
                scn_wins: at.iter().filter(|p| p.scn.test_accuracy > p.baseline.test_accuracy).count(),
                alpha_separation_mean: mean_of(&seps),
                alpha_separated_seeds: seps.iter().filter(|&&v| v > 0.0).count(),
                relabel_precision_mean: mean_of(&precs),
                relabel_recall_mean: mean_of(&recalls).unwrap_or(0.0),
            }
        })
        .collect();
    Ok(CompareReport { levels, pairs })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CompareReport {
    /// One row per noise level.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "noise",
            "seeds",
            "baseline_mean_accuracy",
            "scn_mean_accuracy",
            "delta",
            "scn_wins",
            "alpha_separation_mean",
            "alpha_separated_seeds",
            "relabel_precision_mean",
            "relabel_recall_mean",
        ])?;
        for l in &self.levels {
            w.write_record([
                l.noise.to_string(),
                l.seeds.to_string(),
                l.baseline_mean_accuracy.to_string(),
                l.scn_mean_accuracy.to_string(),
                l.delta.to_string(),
                l.scn_wins.to_string(),
                opt(l.alpha_separation_mean),
                l.alpha_separated_seeds.to_string(),
                opt(l.relabel_precision_mean),
                l.relabel_recall_mean.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn runs(&self) -> Vec<&RunResult> {
        self.pairs.iter().flat_map(|p| [&p.baseline, &p.scn]).collect()
    }
}

/// Per-epoch traces of many runs, prefixed with `variant,noise,seed`.
pub fn write_run_traces<W: Write>(writer: W, runs: &[&RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["variant", "noise", "seed"];
    header.extend(EpochMetrics::CSV_HEADER);
    w.write_record(&header)?;
    for r in runs {
        for m in &r.trace {
            let mut row = vec![r.variant.clone(), r.noise.to_string(), r.seed.to_string()];
            row.extend(m.csv_record());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Relabel events of many runs, prefixed with `variant,noise,seed`.
pub fn write_run_relabels<W: Write>(writer: W, runs: &[&RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "variant", "noise", "seed", "epoch", "sample_id", "old_label", "new_label", "p_max", "p_given",
    ])?;
    for r in runs {
        for e in &r.relabels {
            w.write_record([
                r.variant.clone(),
                r.noise.to_string(),
                r.seed.to_string(),
                e.epoch.to_string(),
                e.sample_id.to_string(),
                e.old_label.to_string(),
                e.new_label.to_string(),
                e.p_max.to_string(),
                e.p_given.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
