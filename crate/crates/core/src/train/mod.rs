//! End-to-end training, evaluation and experiment drivers.

pub mod ablation;
pub mod config;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod trainer;

pub use ablation::{ablation_grid, AblationRow, AblationSweep, AblationTable};
pub use config::{ModuleSwitches, ScnConfig};
pub use eval::{evaluate, evaluate_with, Evaluation};
pub use experiment::{compare, run_variant, CompareReport, DataSpec, RunResult, RunSeeds};
pub use model::{BatchLosses, ModelGrads, Objective, ScnModel};
pub use trainer::{epoch_order, train, train_with, write_metrics_csv, EpochMetrics, TrainOutcome, Trainer};
