//! Isotropic Gaussian class blobs.
//!
//! Class `c` is centered at `R e_c / sqrt(2)` where `e_c` is the `c`-th
//! standard basis vector and `R` is a fixed rotation derived only from the
//! dimension. Every pair of means is therefore exactly one unit apart, and
//! `spread` (the per-coordinate standard deviation) alone sets the overlap.
//! Train and test sets drawn with different seeds share the same means.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::LabeledDataset;
use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

const LAYOUT_SEED: u64 = 0x5eed_b10b;

/// Orthogonal matrix from Gram-Schmidt on a seeded Gaussian matrix.
fn rotation(dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_SEED ^ dim as u64);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Class means with unit pairwise distance; requires `classes <= dim`.
pub fn class_means(classes: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if classes > dim {
        return Err(ScnError::domain(format!(
            "blob layout needs dim >= classes, got dim {dim} for {classes} classes"
        )));
    }
    let rot = rotation(dim);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // R e_c is the c-th column of R; rows of `rot` are the basis vectors, so
    // use them as columns.
    Ok((0..classes)
        .map(|c| (0..dim).map(|d| rot[d][c] * scale).collect())
        .collect())
}

pub fn generate_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 || per_class < 2 {
        return Err(ScnError::domain(format!(
            "need classes >= 2 and per_class >= 2, got {classes} and {per_class}"
        )));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(ScnError::domain(format!("spread must be positive, got {spread}")));
    }
    let means = class_means(classes, dim)?;
    let noise = Normal::new(0.0, spread).map_err(|e| ScnError::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(mean.iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    LabeledDataset::new(Tensor2D::from_vec(n, dim, data)?, labels, classes)
}
