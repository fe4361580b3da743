//! Symmetric per-category label corruption.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Result, ScnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// `floor(ratio * n)`, tolerant of decimal ratios like 0.29 that land a
/// hair below an integer in binary.
pub fn corruption_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Starting from the clean labels, picks `floor(ratio * n_c)` samples of
/// each ground-truth class uniformly without replacement and moves each to
/// a uniformly drawn different class.
pub fn inject_noise(ds: &LabeledDataset, spec: NoiseSpec) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&spec.ratio) {
        return Err(ScnError::domain(format!(
            "noise ratio must be in [0,1), got {}",
            spec.ratio
        )));
    }
    let classes = ds.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = ds.clean_labels().to_vec();
    let mut corrupted = vec![false; ds.len()];
    for c in 0..classes {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.clean_labels()[i] == c).collect();
        let k = corruption_count(spec.ratio, members.len());
        if k == 0 {
            continue;
        }
        let mut picked = sample(&mut rng, members.len(), k).into_vec();
        picked.sort_unstable();
        for p in picked {
            let i = members[p];
            let r = rng.random_range(0..classes - 1);
            labels[i] = if r >= c { r + 1 } else { r };
            corrupted[i] = true;
        }
    }
    Ok(ds.with_labels(labels, corrupted))
}
