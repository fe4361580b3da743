#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scn_core::backbone::MlpBackbone;
use scn_core::data::{generate_blobs, inject_noise, LabeledDataset, NoiseSpec};
use scn_core::loss::{rank_split, relabel, rr_loss, AttentionHead};
use scn_core::optim::SgdOptimizer;
use scn_core::train::{epoch_order, ModuleSwitches, ScnConfig, ScnModel};
use scn_core::Tensor2D;

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor2D {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor2D::from_vec(rows, cols, data).unwrap()
}

/// Textbook mean softmax cross-entropy computed from scratch.
pub fn ce_oracle(w: &Tensor2D, x: &Tensor2D, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let s: Vec<f64> = (0..w.cols())
            .map(|j| (0..w.rows()).map(|d| x.get(i, d) * w.get(d, j)).sum())
            .collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - s[y];
    }
    total / labels.len() as f64
}

/// A plain cross-entropy trainer: MLP features, linear classifier, softmax,
/// SGD. Nothing of the importance-weighting machinery.
pub struct PlainTrainer {
    pub backbone: MlpBackbone,
    pub classifier: Tensor2D,
    optimizer: SgdOptimizer,
    batch_size: usize,
    shuffle_seed: u64,
}

impl PlainTrainer {
    pub fn new(model: &ScnModel, cfg: &ScnConfig) -> Self {
        Self {
            backbone: model.backbone.clone(),
            classifier: model.classifier.weights.clone(),
            optimizer: SgdOptimizer::new(cfg.schedule.clone(), cfg.momentum, cfg.weight_decay).unwrap(),
            batch_size: cfg.batch_size,
            shuffle_seed: cfg.shuffle_seed,
        }
    }

    pub fn epoch(&mut self, ds: &LabeledDataset, epoch: usize) {
        let order = epoch_order(self.shuffle_seed, epoch, ds.len());
        for chunk in order.chunks(self.batch_size) {
            let x = ds.features().select_rows(chunk);
            let n = chunk.len();
            let feats = self.backbone.forward_features(&x).unwrap();
            let logits = feats.matmul(&self.classifier).unwrap();
            let inv_n = 1.0 / n as f64;
            let mut dlogits = Tensor2D::zeros(n, self.classifier.cols());
            for (k, &i) in chunk.iter().enumerate() {
                let row = logits.row(k);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                let y = ds.current_labels()[i];
                for (j, &ej) in e.iter().enumerate() {
                    let p = ej / z;
                    let t = if j == y { 1.0 } else { 0.0 };
                    dlogits.set(k, j, (p - t) * inv_n);
                }
            }
            let gw = feats.transpose().matmul(&dlogits).unwrap();
            let gx = dlogits.matmul(&self.classifier.transpose()).unwrap();
            let gb = self.backbone.backward(&gx).unwrap();
            let mut params = self.backbone.params_mut();
            params.push(self.classifier.as_mut_slice());
            let mut grads = gb.as_slices();
            grads.push(gw.as_slice());
            self.optimizer.step(&mut params, &grads, epoch).unwrap();
        }
    }
}

pub fn small_blobs(seed: u64, noise: f64) -> LabeledDataset {
    let ds = generate_blobs(4, 40, 6, 0.3, seed).unwrap();
    inject_noise(&ds, NoiseSpec { ratio: noise, seed: seed + 1 }).unwrap()
}

pub fn baseline_config() -> ScnConfig {
    ScnConfig {
        modules: ModuleSwitches::NONE,
        epochs: 6,
        batch_size: 16,
        hidden: vec![12],
        feature_dim: 8,
        init_seed: 3,
        shuffle_seed: 4,
        ..ScnConfig::default()
    }
}

/// Trains both trainers side by side and returns the first epoch whose
/// parameters differ in any bit, if any.
pub fn baseline_divergence(epochs: usize) -> Option<usize> {
    let cfg = ScnConfig {
        epochs,
        ..baseline_config()
    };
    let mut ds = small_blobs(11, 0.2);
    let model = ScnModel::new(ds.dim(), ds.classes(), &cfg).unwrap();
    let mut reference = PlainTrainer::new(&model, &cfg);
    let mut trainer = scn_core::train::Trainer::new(model, &cfg).unwrap();
    for e in 0..epochs {
        trainer.train_epoch(&mut ds, None, e).unwrap();
        reference.epoch(&ds, e);
        let same_backbone = trainer.model.backbone.layers() == reference.backbone.layers();
        let same_head = bits(trainer.model.classifier.weights.as_slice()) == bits(reference.classifier.as_slice());
        if !(same_backbone && same_head) {
            return Some(e);
        }
    }
    None
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn alphas_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..max)
}

fn prob_rows(n: usize, c: usize) -> impl Strategy<Value = Tensor2D> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        Tensor2D::from_rows(&rows).unwrap()
    })
}

fn relabel_case() -> impl Strategy<Value = (Tensor2D, Vec<usize>, Vec<f64>, f64, f64)> {
    (2usize..24, 2usize..8).prop_flat_map(|(n, c)| {
        (
            prob_rows(n, c),
            prop::collection::vec(0..c, n),
            prop::collection::vec(0.0f64..1.0, n),
            0.1f64..0.9,
            0.0f64..0.6,
        )
    })
}

fn oracle_high_size(n: usize, beta: f64) -> usize {
    let m = (beta * n as f64).round() as usize;
    m.clamp(1, n - 1)
}

fn run<S: Strategy>(
    runner: &mut TestRunner,
    strategy: &S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner.run(strategy, test).map_err(|e| e.to_string())
}

/// The mechanism invariants, each checked over `cases` random inputs.
pub fn property_suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let mut out = Vec::new();

    out.push((
        "attention weights lie strictly inside (0,1)",
        run(&mut runner, &(1usize..12, 1usize..6, any::<u64>(), -3.0f64..3.0), |(n, d, seed, log_scale)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 10f64.powf(log_scale);
            let mut head = AttentionHead::new(d, true, &mut rng);
            head.weights.iter_mut().for_each(|w| *w *= scale);
            head.bias = Some(rng.random_range(-scale..scale));
            let x = random_tensor(n, d, scale, &mut rng);
            for a in head.attention_weights(&x).unwrap() {
                prop_assert!(a > 0.0 && a < 1.0, "alpha {a}");
            }
            Ok(())
        }),
    ));

    out.push((
        "rank split partitions the batch with |high| = clamp(round(beta N), 1, N-1)",
        run(&mut runner, &(alphas_strategy(40), 0.01f64..0.99), |(alphas, beta)| {
            let n = alphas.len();
            let s = rank_split(&alphas, beta).unwrap();
            prop_assert_eq!(s.high().len(), oracle_high_size(n, beta));
            let mut all: Vec<usize> = s.high().iter().chain(s.low()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let min_high = s.high().iter().map(|&i| alphas[i]).fold(f64::INFINITY, f64::min);
            let max_low = s.low().iter().map(|&i| alphas[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_high >= max_low);
            Ok(())
        }),
    ));

    out.push((
        "rank loss is zero exactly when the group gap reaches delta1",
        run(&mut runner, &(alphas_strategy(40), 0.05f64..0.95, 0.0f64..0.5), |(alphas, beta, delta1)| {
            let s = rank_split(&alphas, beta).unwrap();
            let out = rr_loss(&alphas, s.high(), s.low(), delta1).unwrap();
            let mean = |idx: &[usize]| idx.iter().map(|&i| alphas[i]).sum::<f64>() / idx.len() as f64;
            prop_assert!((out.alpha_high - mean(s.high())).abs() < 1e-12);
            prop_assert!((out.alpha_low - mean(s.low())).abs() < 1e-12);
            let gap = out.alpha_high - out.alpha_low;
            prop_assert_eq!(out.loss == 0.0, gap >= delta1);
            prop_assert!(out.loss >= 0.0);
            Ok(())
        }),
    ));

    out.push((
        "rank loss is invariant to batch order",
        run(&mut runner, &(alphas_strategy(30), 0.05f64..0.95, 0.0f64..0.5, any::<u64>()), |(alphas, beta, delta1, seed)| {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..alphas.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| alphas[i]).collect();
            let a = rank_split(&alphas, beta).unwrap();
            let b = rank_split(&shuffled, beta).unwrap();
            let la = rr_loss(&alphas, a.high(), a.low(), delta1).unwrap().loss;
            let lb = rr_loss(&shuffled, b.high(), b.low(), delta1).unwrap().loss;
            prop_assert!((la - lb).abs() < 1e-12, "{la} vs {lb}");
            Ok(())
        }),
    ));

    out.push((
        "relabeling touches only the low group and is idempotent",
        run(&mut runner, &relabel_case(), |(probs, labels, alphas, beta, delta2)| {
            let s = rank_split(&alphas, beta).unwrap();
            let first = relabel(&probs, &labels, s.low(), delta2).unwrap();
            for i in s.high() {
                prop_assert_eq!(first.labels[*i], labels[*i]);
            }
            for ev in &first.events {
                prop_assert!(s.low().contains(&ev.index));
                prop_assert!(ev.p_max - ev.p_given > delta2);
            }
            let second = relabel(&probs, &first.labels, s.low(), delta2).unwrap();
            prop_assert_eq!(&second.labels, &first.labels);
            prop_assert!(second.events.is_empty());
            Ok(())
        }),
    ));

    out.push((
        "relabeling is the identity when delta2 >= 1",
        run(&mut runner, &(relabel_case(), 1.0f64..3.0), |((probs, labels, alphas, beta, _), delta2)| {
            let s = rank_split(&alphas, beta).unwrap();
            let outcome = relabel(&probs, &labels, s.low(), delta2).unwrap();
            prop_assert_eq!(outcome.labels, labels);
            prop_assert!(outcome.events.is_empty());
            Ok(())
        }),
    ));

    out.push((
        "noise injection corrupts floor(ratio n_c) per class, never to the clean label",
        run(&mut runner, &(2usize..7, 2usize..30, 0.0f64..0.95, any::<u64>()), |(classes, per_class, ratio, seed)| {
            let ds = generate_blobs(classes, per_class, classes, 0.5, seed).unwrap();
            let noisy = inject_noise(&ds, NoiseSpec { ratio, seed }).unwrap();
            prop_assert_eq!(noisy.clean_labels(), ds.clean_labels());
            let expected = (ratio * per_class as f64 + 1e-9).floor() as usize;
            for c in 0..classes {
                let flipped = (0..noisy.len())
                    .filter(|&i| noisy.clean_labels()[i] == c && noisy.corrupted()[i])
                    .count();
                prop_assert_eq!(flipped, expected, "class {}", c);
            }
            for i in 0..noisy.len() {
                let changed = noisy.current_labels()[i] != noisy.clean_labels()[i];
                prop_assert_eq!(changed, noisy.corrupted()[i]);
            }
            Ok(())
        }),
    ));

    out
}
