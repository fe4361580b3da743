//! The trainable network: backbone, attention head, classifier and the
//! (optionally learnable) rank margin.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModuleSwitches, ScnConfig};
use crate::backbone::{BackboneGrads, MlpBackbone};
use crate::error::{Result, ScnError};
use crate::loss::{
    rank_split, rr_loss, total_loss, wce_loss, AttentionGrads, AttentionHead, BatchState, Classifier,
};
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq)]
pub struct ScnModel {
    pub backbone: MlpBackbone,
    pub attention: AttentionHead,
    pub classifier: Classifier,
    pub delta1: f64,
}

/// Gradients of the batch objective with respect to every parameter.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub backbone: BackboneGrads,
    /// `None` when neither weighting nor rank regularization is on.
    pub attention: Option<AttentionGrads>,
    pub classifier: Tensor2D,
    pub delta1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLosses {
    pub wce: f64,
    /// `None` when the rank term was not evaluated for this batch.
    pub rr: Option<f64>,
    pub total: f64,
}

/// Hyperparameters one gradient evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub beta: f64,
    pub gamma: f64,
    pub modules: ModuleSwitches,
}

impl Objective {
    pub fn from_config(cfg: &ScnConfig) -> Self {
        Self {
            beta: cfg.beta,
            gamma: cfg.gamma,
            modules: cfg.modules,
        }
    }
}

impl ScnModel {
    /// Seeded initialization in a fixed order: backbone, classifier,
    /// attention head. Two models with the same seed and shape are equal
    /// regardless of module switches.
    pub fn new(input_dim: usize, classes: usize, cfg: &ScnConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut dims = vec![input_dim];
        dims.extend(&cfg.hidden);
        dims.push(cfg.feature_dim);
        let backbone = MlpBackbone::new(&dims, &mut rng)?;
        let classifier = Classifier::new(cfg.feature_dim, classes, &mut rng)?;
        let attention = AttentionHead::new(cfg.feature_dim, cfg.attention_bias, &mut rng);
        Ok(Self {
            backbone,
            attention,
            classifier,
            delta1: cfg.margins.delta1,
        })
    }

    pub fn from_parts(
        backbone: MlpBackbone,
        attention: AttentionHead,
        classifier: Classifier,
        delta1: f64,
    ) -> Result<Self> {
        let d = backbone.feature_dim();
        if attention.dim() != d || classifier.dim() != d {
            return Err(ScnError::shape(
                "ScnModel",
                format!("feature dim {d}"),
                format!("attention {} / classifier {}", attention.dim(), classifier.dim()),
            ));
        }
        Ok(Self {
            backbone,
            attention,
            classifier,
            delta1,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.classes()
    }

    /// Unscaled logits without caching.
    pub fn predict_logits(&self, inputs: &Tensor2D) -> Result<Tensor2D> {
        let f = self.backbone.infer(inputs)?;
        self.classifier.logits(&f)
    }

    pub fn predict_alphas(&self, inputs: &Tensor2D) -> Result<Vec<f64>> {
        let f = self.backbone.infer(inputs)?;
        self.attention.attention_weights(&f)
    }

    /// Forward and backward for one batch.
    ///
    /// Attention weights are always computed so ranking and relabeling can
    /// use them; they only scale the logits when weighting is on. With the
    /// rank term active the objective is `gamma * RR + (1 - gamma) * WCE`
    /// (RR taken as zero for batches of one sample); without it the
    /// objective is the weighted cross-entropy alone.
    pub fn batch_gradients(
        &mut self,
        inputs: &Tensor2D,
        labels: &[usize],
        obj: Objective,
    ) -> Result<(BatchState, BatchLosses, ModelGrads)> {
        let n = inputs.rows();
        let features = self.backbone.forward_features(inputs)?;
        let alphas = self.attention.attention_weights(&features)?;
        let ones;
        let scales: &[f64] = if obj.modules.weighting {
            &alphas
        } else {
            ones = vec![1.0; n];
            &ones
        };
        let wce = wce_loss(&self.classifier, &features, scales, labels)?;
        let split = if n >= 2 { Some(rank_split(&alphas, obj.beta)?) } else { None };
        let rr = match (&split, obj.modules.rank_reg) {
            (Some(s), true) => Some(rr_loss(&alphas, s.high(), s.low(), self.delta1)?),
            _ => None,
        };

        let (total, wce_weight) = if obj.modules.rank_reg {
            let rr_value = rr.as_ref().map_or(0.0, |r| r.loss);
            (total_loss(wce.loss, rr_value, obj.gamma)?, 1.0 - obj.gamma)
        } else {
            (wce.loss, 1.0)
        };

        let mut grad_features = wce.grad_features.clone();
        let mut grad_classifier = wce.grad_classifier.clone();
        if wce_weight != 1.0 {
            grad_features.as_mut_slice().iter_mut().for_each(|g| *g *= wce_weight);
            grad_classifier.as_mut_slice().iter_mut().for_each(|g| *g *= wce_weight);
        }

        let attention = if obj.modules.weighting || obj.modules.rank_reg {
            let mut grad_alpha = vec![0.0; n];
            if obj.modules.weighting {
                for (g, &s) in grad_alpha.iter_mut().zip(&wce.grad_scale) {
                    *g += wce_weight * s;
                }
            }
            if let Some(r) = &rr {
                for (g, &s) in grad_alpha.iter_mut().zip(&r.grad_alpha) {
                    *g += obj.gamma * s;
                }
            }
            let ag = self.attention.backward(&features, &alphas, &grad_alpha)?;
            for (g, &a) in grad_features.as_mut_slice().iter_mut().zip(ag.features.as_slice()) {
                *g += a;
            }
            Some(ag)
        } else {
            None
        };
        let delta1 = rr.as_ref().map_or(0.0, |r| obj.gamma * r.grad_delta1);
        let backbone = self.backbone.backward(&grad_features)?;

        let state = BatchState {
            alphas,
            split,
            logits: wce.logits,
            probabilities: wce.probabilities,
            labels: labels.to_vec(),
        };
        let losses = BatchLosses {
            wce: wce.loss,
            rr: rr.map(|r| r.loss),
            total,
        };
        Ok((
            state,
            losses,
            ModelGrads {
                backbone,
                attention,
                classifier: grad_classifier,
                delta1,
            },
        ))
    }

    /// Objective value for fixed rank groups; the finite-difference
    /// counterpart of [`Self::batch_gradients`].
    pub fn objective_with_groups(
        &self,
        inputs: &Tensor2D,
        labels: &[usize],
        obj: Objective,
        groups: Option<(&[usize], &[usize])>,
    ) -> Result<f64> {
        let features = self.backbone.infer(inputs)?;
        let alphas = self.attention.attention_weights(&features)?;
        let scales = if obj.modules.weighting {
            alphas.clone()
        } else {
            vec![1.0; inputs.rows()]
        };
        let wce = wce_loss(&self.classifier, &features, &scales, labels)?.loss;
        if !obj.modules.rank_reg {
            return Ok(wce);
        }
        let rr = match groups {
            Some((high, low)) => rr_loss(&alphas, high, low, self.delta1)?.loss,
            None => 0.0,
        };
        total_loss(wce, rr, obj.gamma)
    }
}
