//! Central finite differences and the gradient verification suite.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::loss::{rank_split, rr_loss, wce_loss, AttentionHead, Classifier, MarginMode, Margins};
use crate::parallel::{self, Execution};
use crate::tensor::Tensor2D;
use crate::train::{ModuleSwitches, Objective, ScnConfig, ScnModel};

/// Magnitudes below this are compared absolutely; central differences with
/// step 1e-6 carry ~1e-10 rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// `(f(p + h e_k) - f(p - h e_k)) / 2h` for every coordinate `k`.
pub fn finite_diff_grad<F>(loss_fn: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(ScnError::domain(format!("step must be positive, got {step}")));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + step;
        let plus = loss_fn(&p);
        p[k] = orig - step;
        let minus = loss_fn(&p);
        p[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(ScnError::numeric(format!("non-finite loss while probing coordinate {k}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// `max_k |a_k - n_k| / max(|a_k|, |n_k|, RELATIVE_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// Weighted cross-entropy w.r.t. classifier, features and alpha.
    Wce,
    /// Rank hinge w.r.t. alpha and delta1, groups frozen.
    Rr,
    /// Sigmoid attention head w.r.t. its weights and the features.
    Attention,
    /// Full objective through backbone, heads and delta1.
    Total,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Wce, Component::Rr, Component::Attention, Component::Total];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Wce => "wce",
            Component::Rr => "rr",
            Component::Attention => "attention",
            Component::Total => "total",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Test hook: perturbs this component's analytic gradient.
    pub corrupt: Option<Component>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-4,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentResult {
    pub component: Component,
    pub instances: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<ComponentResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<Component> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.component).collect()
    }
}

fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor2D {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor2D::from_vec(rows, cols, data).expect("shape")
}

struct Instance {
    n: usize,
    d: usize,
    c: usize,
    rng: ChaCha8Rng,
}

impl Instance {
    fn new(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        Self {
            n: rng.random_range(2..=16),
            d: rng.random_range(2..=8),
            c: rng.random_range(2..=8),
            rng,
        }
    }
}

fn corrupt(grad: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = *g * 1.1 + 1e-3);
}

fn check_wce(inst: &mut Instance, cfg: &GradcheckConfig, hook: bool) -> Result<f64> {
    let Instance { n, d, c, .. } = *inst;
    let rng = &mut inst.rng;
    let w = random_tensor(d, c, 1.0, rng);
    let x = random_tensor(n, d, 1.5, rng);
    let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let clf = Classifier::from_weights(w.clone())?;
    let out = wce_loss(&clf, &x, &alphas, &labels)?;
    let mut analytic: Vec<f64> = out.grad_classifier.as_slice().to_vec();
    analytic.extend_from_slice(out.grad_features.as_slice());
    analytic.extend_from_slice(&out.grad_scale);
    if hook {
        corrupt(&mut analytic);
    }
    let mut flat: Vec<f64> = w.as_slice().to_vec();
    flat.extend_from_slice(x.as_slice());
    flat.extend_from_slice(&alphas);
    let (wl, xl) = (d * c, n * d);
    let numeric = finite_diff_grad(
        |p| {
            let clf = Classifier::from_weights(Tensor2D::from_vec(d, c, p[..wl].to_vec()).unwrap()).unwrap();
            let x = Tensor2D::from_vec(n, d, p[wl..wl + xl].to_vec()).unwrap();
            wce_loss(&clf, &x, &p[wl + xl..], &labels).map_or(f64::NAN, |o| o.loss)
        },
        &flat,
        cfg.step,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn check_rr(inst: &mut Instance, cfg: &GradcheckConfig, hook: bool) -> Result<f64> {
    let n = inst.n;
    let rng = &mut inst.rng;
    let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
    let split = rank_split(&alphas, 0.7)?;
    let (high, low) = (split.high().to_vec(), split.low().to_vec());
    let gap = {
        let m = |idx: &[usize]| idx.iter().map(|&i| alphas[i]).sum::<f64>() / idx.len() as f64;
        m(&high) - m(&low)
    };
    // alternate active and inactive hinges, both well away from the kink
    let below = gap - rng.random_range(0.05..0.3);
    let delta1 = if rng.random_bool(0.25) && below > 0.01 {
        below
    } else {
        gap.max(0.0) + rng.random_range(0.05..0.3)
    };
    let out = rr_loss(&alphas, &high, &low, delta1)?;
    let mut analytic = out.grad_alpha.clone();
    analytic.push(out.grad_delta1);
    if hook {
        corrupt(&mut analytic);
    }
    let mut flat = alphas.clone();
    flat.push(delta1);
    let numeric = finite_diff_grad(
        |p| rr_loss(&p[..n], &high, &low, p[n]).map_or(f64::NAN, |o| o.loss),
        &flat,
        cfg.step,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn check_attention(inst: &mut Instance, cfg: &GradcheckConfig, hook: bool) -> Result<f64> {
    let Instance { n, d, .. } = *inst;
    let rng = &mut inst.rng;
    let mut head = AttentionHead::new(d, true, rng);
    head.bias = Some(rng.random_range(-0.5..0.5));
    let x = random_tensor(n, d, 1.5, rng);
    let coef: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let alphas = head.attention_weights(&x)?;
    let g = head.backward(&x, &alphas, &coef)?;
    let mut analytic = g.weights.clone();
    analytic.push(g.bias.unwrap_or(0.0));
    analytic.extend_from_slice(g.features.as_slice());
    if hook {
        corrupt(&mut analytic);
    }
    let mut flat = head.weights.clone();
    flat.push(head.bias.unwrap_or(0.0));
    flat.extend_from_slice(x.as_slice());
    let numeric = finite_diff_grad(
        |p| {
            let h = AttentionHead {
                weights: p[..d].to_vec(),
                bias: Some(p[d]),
            };
            let x = Tensor2D::from_vec(n, d, p[d + 1..].to_vec()).unwrap();
            h.attention_weights(&x)
                .map_or(f64::NAN, |a| a.iter().zip(&coef).map(|(a, c)| a * c).sum())
        },
        &flat,
        cfg.step,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Flattens every trainable value of `model` in a fixed order.
fn flatten(model: &mut ScnModel) -> Vec<f64> {
    let mut out: Vec<f64> = model.backbone.params_mut().iter().flat_map(|s| s.iter().copied()).collect();
    out.extend_from_slice(model.classifier.weights.as_slice());
    for s in model.attention.params_mut() {
        out.extend_from_slice(s);
    }
    out.push(model.delta1);
    out
}

fn unflatten(model: &mut ScnModel, flat: &[f64]) {
    let mut off = 0;
    let mut fill = |s: &mut [f64]| {
        s.copy_from_slice(&flat[off..off + s.len()]);
        off += s.len();
    };
    model.backbone.params_mut().into_iter().for_each(&mut fill);
    fill(model.classifier.weights.as_mut_slice());
    model.attention.params_mut().into_iter().for_each(&mut fill);
    fill(std::slice::from_mut(&mut model.delta1));
}

fn check_total(inst: &mut Instance, cfg: &GradcheckConfig, hook: bool) -> Result<f64> {
    let Instance { n, d, c, .. } = *inst;
    let rng = &mut inst.rng;
    let input_dim = rng.random_range(2..=8);
    let hidden = rng.random_range(2..=8);
    let model_cfg = ScnConfig {
        hidden: vec![hidden],
        feature_dim: d,
        attention_bias: rng.random_bool(0.5),
        init_seed: rng.random(),
        margins: Margins {
            delta1: rng.random_range(0.0..0.6),
            mode: MarginMode::Learnable,
            delta2: 0.2,
        },
        ..ScnConfig::default()
    };
    let mut model = ScnModel::new(input_dim, c, &model_cfg)?;
    // sharpen the head so alphas spread over (0,1)
    model.attention.weights.iter_mut().for_each(|w| *w *= 3.0);
    for layer in model.backbone.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    }
    let x = random_tensor(n, input_dim, 1.5, rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let obj = Objective {
        beta: 0.7,
        gamma: rng.random_range(0.1..0.9),
        modules: ModuleSwitches::ALL,
    };
    let (state, _, grads) = model.batch_gradients(&x, &labels, obj)?;
    let split = state.split.clone().expect("n >= 2");
    let (high, low) = (split.high().to_vec(), split.low().to_vec());

    let mut analytic: Vec<f64> = grads.backbone.as_slices().iter().flat_map(|s| s.iter().copied()).collect();
    analytic.extend_from_slice(grads.classifier.as_slice());
    let ag = grads.attention.as_ref().expect("attention active");
    analytic.extend_from_slice(&ag.weights);
    if let Some(b) = ag.bias {
        analytic.push(b);
    }
    analytic.push(grads.delta1);
    if hook {
        corrupt(&mut analytic);
    }

    let flat = flatten(&mut model);
    let template = model.clone();
    let numeric = finite_diff_grad(
        |p| {
            let mut m = template.clone();
            unflatten(&mut m, p);
            m.objective_with_groups(&x, &labels, obj, Some((&high, &low)))
                .unwrap_or(f64::NAN)
        },
        &flat,
        cfg.step,
    )?;
    // skip the delta1 coordinate when the hinge sits exactly at its kink
    let hinge_gap = {
        let m = |idx: &[usize]| idx.iter().map(|&i| state.alphas[i]).sum::<f64>() / idx.len() as f64;
        model.delta1 - (m(&high) - m(&low))
    };
    let len = if hinge_gap.abs() < 1e-4 { flat.len() - 1 } else { flat.len() };
    Ok(max_relative_error(&analytic[..len], &numeric[..len]))
}

pub fn run_gradcheck(cfg: &GradcheckConfig, exec: Execution) -> Result<GradcheckReport> {
    if cfg.instances == 0 {
        return Err(ScnError::domain("gradcheck needs at least one instance"));
    }
    let jobs: Vec<(Component, usize)> = Component::ALL
        .iter()
        .flat_map(|&c| (0..cfg.instances).map(move |i| (c, i)))
        .collect();
    let errors = parallel::try_map(&jobs, exec, |&(component, index)| {
        let mut inst = Instance::new(cfg.seed, index);
        let hook = cfg.corrupt == Some(component);
        match component {
            Component::Wce => check_wce(&mut inst, cfg, hook),
            Component::Rr => check_rr(&mut inst, cfg, hook),
            Component::Attention => check_attention(&mut inst, cfg, hook),
            Component::Total => check_total(&mut inst, cfg, hook),
        }
    })?;
    let results = Component::ALL
        .iter()
        .map(|&component| {
            let max_rel_error = jobs
                .iter()
                .zip(&errors)
                .filter(|((c, _), _)| *c == component)
                .map(|(_, &e)| e)
                .fold(0.0, f64::max);
            ComponentResult {
                component,
                instances: cfg.instances,
                max_rel_error,
                passed: max_rel_error < cfg.tolerance,
            }
        })
        .collect();
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        results,
    })
}
