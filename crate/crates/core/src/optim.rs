//! SGD with momentum and a step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};

/// Piecewise-constant schedule: the base rate is multiplied by `factor`
/// once for every decay epoch that is `<=` the current (zero-based) epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub base_lr: f64,
    pub decay_epochs: Vec<usize>,
    pub factor: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            decay_epochs: vec![15, 30],
            factor: 0.1,
        }
    }
}

impl StepDecay {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(ScnError::domain(format!("learning rate must be positive, got {}", self.base_lr)));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(ScnError::domain(format!("decay factor must be in (0,1), got {}", self.factor)));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.base_lr * self.factor.powi(decays as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdOptimizer {
    pub schedule: StepDecay,
    pub momentum: f64,
    pub weight_decay: f64,
    #[serde(skip)]
    velocity: Vec<Vec<f64>>,
}

impl SgdOptimizer {
    pub fn new(schedule: StepDecay, momentum: f64, weight_decay: f64) -> Result<Self> {
        schedule.validate()?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(ScnError::domain(format!("momentum must be in [0,1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(ScnError::domain(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        Ok(Self {
            schedule,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule.lr_at(epoch)
    }

    /// One update over every parameter group.
    ///
    /// `v <- momentum * v + (g + wd * p)`, `p <- p - lr(epoch) * v`. The
    /// velocity buffers are created on the first call and pin the group
    /// layout for the optimizer's lifetime.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], epoch: usize) -> Result<()> {
        if params.len() != grads.len() {
            return Err(ScnError::shape(
                "sgd_step",
                format!("{} parameter groups", params.len()),
                format!("{} gradient groups", grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(ScnError::shape(
                    "sgd_step",
                    format!("parameter group {i} of length {}", p.len()),
                    format!("gradient of length {}", g.len()),
                ));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len())
        {
            return Err(ScnError::shape(
                "sgd_step",
                "parameter layout of earlier steps",
                "parameter layout of this step",
            ));
        }
        let lr = self.lr_at(epoch);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let grad = if self.weight_decay > 0.0 { gv + self.weight_decay * *pv } else { gv };
                *vv = self.momentum * *vv + grad;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}
