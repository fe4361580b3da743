//! One-parameter sweeps and the module on/off grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ModuleSwitches, ScnConfig};
use super::experiment::{mean_of, run_jobs, DataSpec, RunResult};
use crate::error::{Result, ScnError};
use crate::loss::MarginMode;
use crate::parallel::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "axis", content = "values")]
pub enum AblationSweep {
    Gamma(Vec<f64>),
    Delta1 { values: Vec<f64>, learnable: bool },
    Delta2(Vec<f64>),
    Beta(Vec<f64>),
    Modules(Vec<ModuleSwitches>),
}

impl AblationSweep {
    pub fn gamma_default() -> Self {
        AblationSweep::Gamma(vec![0.2, 0.3, 0.5, 0.6, 0.8])
    }

    pub fn beta_default() -> Self {
        AblationSweep::Beta(vec![0.9, 0.8, 0.7, 0.6, 0.5])
    }

    pub fn delta1_default(learnable: bool) -> Self {
        AblationSweep::Delta1 {
            values: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            learnable,
        }
    }

    pub fn delta2_default() -> Self {
        AblationSweep::Delta2(vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    }

    /// Rows of the module grid: baseline, relabel only, rank only,
    /// weighting only, weighting + rank, all three.
    pub fn modules_default() -> Self {
        let s = |weighting, rank_reg, relabel| ModuleSwitches {
            weighting,
            rank_reg,
            relabel,
        };
        AblationSweep::Modules(vec![
            s(false, false, false),
            s(false, false, true),
            s(false, true, false),
            s(true, false, false),
            s(true, true, false),
            s(true, true, true),
        ])
    }

    pub fn axis(&self) -> &'static str {
        match self {
            AblationSweep::Gamma(_) => "gamma",
            AblationSweep::Delta1 { .. } => "delta1",
            AblationSweep::Delta2(_) => "delta2",
            AblationSweep::Beta(_) => "beta",
            AblationSweep::Modules(_) => "modules",
        }
    }

    /// Every configuration of the sweep, validated up front.
    pub fn variants(&self, base: &ScnConfig) -> Result<Vec<(String, ScnConfig)>> {
        let numeric = |values: &[f64], set: &dyn Fn(&mut ScnConfig, f64)| {
            values
                .iter()
                .map(|&v| {
                    let mut c = base.clone();
                    set(&mut c, v);
                    (v.to_string(), c)
                })
                .collect::<Vec<_>>()
        };
        let out = match self {
            AblationSweep::Gamma(v) => numeric(v, &|c, x| c.gamma = x),
            AblationSweep::Delta2(v) => numeric(v, &|c, x| c.margins.delta2 = x),
            AblationSweep::Beta(v) => numeric(v, &|c, x| c.beta = x),
            AblationSweep::Delta1 { values, learnable } => numeric(values, &|c, x| {
                c.margins.delta1 = x;
                c.margins.mode = if *learnable { MarginMode::Learnable } else { MarginMode::Fixed };
            }),
            AblationSweep::Modules(v) => v
                .iter()
                .map(|&m| (m.label(), ScnConfig { modules: m, ..base.clone() }))
                .collect(),
        };
        if out.is_empty() {
            return Err(ScnError::domain(format!("{} sweep has no values", self.axis())));
        }
        for (label, cfg) in &out {
            cfg.validate()
                .map_err(|e| ScnError::domain(format!("{} = {label}: {e}", self.axis())))?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub mean_test_accuracy: f64,
    pub mean_class_accuracy: f64,
    pub per_seed_accuracy: Vec<f64>,
    pub alpha_separation_mean: Option<f64>,
    pub relabel_precision_mean: Option<f64>,
    pub final_delta1_mean: f64,
    #[serde(skip)]
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub axis: String,
    pub noise: f64,
    pub rows: Vec<AblationRow>,
}

/// Trains every sweep value on every seed. Invalid values fail before any
/// training starts.
pub fn ablation_grid(
    data: &DataSpec,
    base: &ScnConfig,
    sweep: &AblationSweep,
    noise: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<AblationTable> {
    let variants = sweep.variants(base)?;
    if seeds.is_empty() {
        return Err(ScnError::domain("ablation needs at least one seed"));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(ScnError::domain(format!("noise ratio must be in [0,1), got {noise}")));
    }
    let jobs: Vec<(String, ScnConfig, f64, u64)> = variants
        .iter()
        .flat_map(|(label, cfg)| seeds.iter().map(move |&s| (label.clone(), cfg.clone(), noise, s)))
        .collect();
    let mut results = run_jobs(data, &jobs, exec)?.into_iter();
    let rows = variants
        .iter()
        .map(|(label, _)| {
            let runs: Vec<RunResult> = results.by_ref().take(seeds.len()).collect();
            let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
            let mca: Vec<f64> = runs.iter().map(|r| r.test_mean_class_accuracy).collect();
            let seps: Vec<f64> = runs.iter().filter_map(RunResult::alpha_separation).collect();
            let precs: Vec<f64> = runs.iter().filter_map(|r| r.relabel_precision).collect();
            let d1: Vec<f64> = runs.iter().map(|r| r.final_delta1).collect();
            AblationRow {
                label: label.clone(),
                mean_test_accuracy: mean_of(&accs).unwrap_or(0.0),
                mean_class_accuracy: mean_of(&mca).unwrap_or(0.0),
                per_seed_accuracy: accs,
                alpha_separation_mean: mean_of(&seps),
                relabel_precision_mean: mean_of(&precs),
                final_delta1_mean: mean_of(&d1).unwrap_or(0.0),
                runs,
            }
        })
        .collect();
    Ok(AblationTable {
        axis: sweep.axis().to_string(),
        noise,
        rows,
    })
}

impl AblationTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "axis",
            "value",
            "noise",
            "mean_test_accuracy",
            "mean_class_accuracy",
            "alpha_separation_mean",
            "relabel_precision_mean",
            "final_delta1_mean",
            "per_seed_accuracy",
        ])?;
        for r in &self.rows {
            let per_seed: Vec<String> = r.per_seed_accuracy.iter().map(f64::to_string).collect();
            w.write_record([
                self.axis.clone(),
                r.label.clone(),
                self.noise.to_string(),
                r.mean_test_accuracy.to_string(),
                r.mean_class_accuracy.to_string(),
                opt(r.alpha_separation_mean),
                opt(r.relabel_precision_mean),
                r.final_delta1_mean.to_string(),
                per_seed.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn runs(&self) -> Vec<&RunResult> {
        self.rows.iter().flat_map(|r| r.runs.iter()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data() -> DataSpec {
        DataSpec {
            classes: 3,
            train_per_class: 16,
            test_per_class: 8,
            dim: 4,
            spread: 0.3,
        }
    }

    fn tiny_config() -> ScnConfig {
        ScnConfig {
            epochs: 2,
            relabel_start_epoch: 1,
            batch_size: 16,
            hidden: vec![6],
            feature_dim: 4,
            ..ScnConfig::default()
        }
    }

    #[test]
    fn gamma_sweep_has_five_rows() {
        let t = ablation_grid(&tiny_data(), &tiny_config(), &AblationSweep::gamma_default(), 0.3, &[0], Execution::default())
            .unwrap();
        assert_eq!(t.rows.len(), 5);
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["0.2", "0.3", "0.5", "0.6", "0.8"]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn module_grid_has_baseline_and_full() {
        let AblationSweep::Modules(rows) = AblationSweep::modules_default() else {
            unreachable!()
        };
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0], ModuleSwitches::NONE);
        assert_eq!(rows[5], ModuleSwitches::ALL);
        assert_eq!(AblationSweep::beta_default(), AblationSweep::Beta(vec![0.9, 0.8, 0.7, 0.6, 0.5]));
    }

    #[test]
    fn invalid_values_fail_before_training() {
        let sweep = AblationSweep::Beta(vec![0.5, 1.2]);
        let err = ablation_grid(&tiny_data(), &tiny_config(), &sweep, 0.3, &[0], Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("beta = 1.2"), "{err}");
        assert!(AblationSweep::Gamma(vec![]).variants(&tiny_config()).is_err());
    }

    #[test]
    fn learnable_delta1_sweep() {
        let sweep = AblationSweep::Delta1 { values: vec![0.15], learnable: true };
        let v = sweep.variants(&tiny_config()).unwrap();
        assert_eq!(v[0].1.margins.mode, MarginMode::Learnable);
    }
}
