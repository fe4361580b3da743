//! Descending rank split of importance weights and the hinge that keeps the
//! two groups apart.

use crate::error::{Result, ScnError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankSplit {
    /// Batch indices sorted by descending alpha, ties by ascending index.
    pub order: Vec<usize>,
    /// Size of the high-importance group.
    pub high_count: usize,
}

impl RankSplit {
    pub fn high(&self) -> &[usize] {
        &self.order[..self.high_count]
    }

    pub fn low(&self) -> &[usize] {
        &self.order[self.high_count..]
    }
}

/// `round(beta * n)` clamped so both groups are non-empty.
pub fn high_group_size(n: usize, beta: f64) -> usize {
    let m = (beta * n as f64).round() as usize;
    m.clamp(1, n.saturating_sub(1).max(1))
}

pub fn rank_split(alphas: &[f64], beta: f64) -> Result<RankSplit> {
    let n = alphas.len();
    if n < 2 {
        return Err(ScnError::domain(format!(
            "rank split needs at least 2 samples, got {n}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ScnError::domain(format!("beta must be in (0,1), got {beta}")));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(ScnError::numeric("non-finite importance weight"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal alphas keep ascending index order
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    Ok(RankSplit {
        order,
        high_count: high_group_size(n, beta),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrOutput {
    pub loss: f64,
    pub alpha_high: f64,
    pub alpha_low: f64,
    pub active: bool,
    /// `dL/dalpha`, indexed like the batch.
    pub grad_alpha: Vec<f64>,
    /// `dL/ddelta1`: one while the hinge is active.
    pub grad_delta1: f64,
}

/// `max(0, delta1 - (mean_high - mean_low))` with group membership held
/// fixed for differentiation. The subgradient at the kink is zero.
pub fn rr_loss(alphas: &[f64], high: &[usize], low: &[usize], delta1: f64) -> Result<RrOutput> {
    let n = alphas.len();
    if high.is_empty() || low.is_empty() {
        return Err(ScnError::domain("rank regularization needs two non-empty groups"));
    }
    if !(delta1 >= 0.0 && delta1.is_finite()) {
        return Err(ScnError::domain(format!("delta1 must be >= 0, got {delta1}")));
    }
    let mut seen = vec![false; n];
    for &i in high.iter().chain(low) {
        if i >= n {
            return Err(ScnError::domain(format!("group index {i} outside batch of {n}")));
        }
        if seen[i] {
            return Err(ScnError::domain(format!("index {i} appears in both groups or twice")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(ScnError::domain("groups do not cover the batch"));
    }
    let mean = |idx: &[usize]| idx.iter().map(|&i| alphas[i]).sum::<f64>() / idx.len() as f64;
    let alpha_high = mean(high);
    let alpha_low = mean(low);
    let hinge = delta1 - (alpha_high - alpha_low);
    let active = hinge > 0.0;
    let mut grad_alpha = vec![0.0; n];
    if active {
        let gh = -1.0 / high.len() as f64;
        let gl = 1.0 / low.len() as f64;
        high.iter().for_each(|&i| grad_alpha[i] = gh);
        low.iter().for_each(|&i| grad_alpha[i] = gl);
    }
    Ok(RrOutput {
        loss: if active { hinge } else { 0.0 },
        alpha_high,
        alpha_low,
        active,
        grad_alpha,
        grad_delta1: if active { 1.0 } else { 0.0 },
    })
}
