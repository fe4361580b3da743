use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::loss::{MarginMode, Margins};
use crate::optim::StepDecay;

/// Which of the three mechanisms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSwitches {
    /// Scale logits by the attention weights.
    pub weighting: bool,
    /// Add the rank-regularization hinge.
    pub rank_reg: bool,
    /// Relabel low-importance samples.
    pub relabel: bool,
}

impl ModuleSwitches {
    pub const ALL: Self = Self {
        weighting: true,
        rank_reg: true,
        relabel: true,
    };
    pub const NONE: Self = Self {
        weighting: false,
        rank_reg: false,
        relabel: false,
    };

    pub fn any(&self) -> bool {
        self.weighting || self.rank_reg || self.relabel
    }

    /// Short tag such as `W+R+L`, `W`, or `base`.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.weighting, "W"),
            (self.rank_reg, "R"),
            (self.relabel, "L"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join("+")
        }
    }
}

impl Default for ModuleSwitches {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScnConfig {
    /// Fraction of each batch placed in the high-importance group.
    pub beta: f64,
    /// Weight of the rank loss in `gamma * RR + (1 - gamma) * WCE`.
    pub gamma: f64,
    pub margins: Margins,
    /// First zero-based epoch at which relabeling runs.
    pub relabel_start_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: StepDecay,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Hidden widths of the backbone.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub attention_bias: bool,
    pub modules: ModuleSwitches,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for ScnConfig {
    fn default() -> Self {
        Self {
            beta: 0.7,
            gamma: 0.5,
            margins: Margins::default(),
            relabel_start_epoch: 10,
            epochs: 40,
            batch_size: 64,
            schedule: StepDecay::default(),
            momentum: 0.9,
            weight_decay: 0.0,
            hidden: vec![64],
            feature_dim: 32,
            attention_bias: false,
            modules: ModuleSwitches::ALL,
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

impl ScnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ScnError::domain(format!("beta must be in (0,1), got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ScnError::domain(format!("gamma must be in [0,1], got {}", self.gamma)));
        }
        self.margins.validate()?;
        if self.modules.relabel && self.relabel_start_epoch > self.epochs {
            return Err(ScnError::domain(format!(
                "relabel start epoch {} exceeds epoch count {}",
                self.relabel_start_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(ScnError::domain("batch size must be positive"));
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(ScnError::domain("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ScnError::domain(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        self.schedule.validate()
    }

    pub fn delta1_learnable(&self) -> bool {
        self.margins.mode == MarginMode::Learnable
    }

    /// Same run with every mechanism switched off.
    pub fn baseline(&self) -> Self {
        Self {
            modules: ModuleSwitches::NONE,
            ..self.clone()
        }
    }
}
