mod common;

use std::collections::HashMap;

use scn_core::data::{generate_blobs, inject_noise, NoiseSpec};
use scn_core::loss::write_relabel_csv;
use scn_core::train::experiment::{CompareSpec, DataSpec};
use scn_core::train::{
    ablation_grid, compare, train_with, AblationSweep, ModuleSwitches, ScnConfig, ScnModel, Trainer,
};
use scn_core::Execution;

use common::{baseline_config, baseline_divergence, small_blobs};

fn quick_config() -> ScnConfig {
    ScnConfig {
        epochs: 8,
        relabel_start_epoch: 2,
        batch_size: 16,
        hidden: vec![12],
        feature_dim: 8,
        ..ScnConfig::default()
    }
}

fn quick_data() -> DataSpec {
    DataSpec {
        classes: 4,
        train_per_class: 40,
        test_per_class: 20,
        dim: 6,
        spread: 0.3,
    }
}

#[test]
fn baseline_matches_plain_cross_entropy_bit_for_bit() {
    assert_eq!(baseline_divergence(8), None);
}

#[test]
fn baseline_ignores_relabel_and_rank_settings() {
    let mut ds = small_blobs(2, 0.3);
    let run = |cfg: &ScnConfig, ds: &mut _| {
        let model = ScnModel::new(6, 4, cfg).unwrap();
        train_with(model, ds, None, cfg, Execution::Sequential).unwrap().model
    };
    let a = run(&baseline_config(), &mut ds.clone());
    let odd = ScnConfig {
        beta: 0.4,
        gamma: 0.9,
        ..baseline_config()
    };
    let b = run(&odd, &mut ds);
    assert_eq!(a, b);
}

#[test]
fn first_epoch_lowers_the_loss() {
    let cfg = quick_config();
    let mut ds = small_blobs(3, 0.1);
    let model = ScnModel::new(6, 4, &cfg).unwrap();
    let mut trainer = Trainer::new(model, &cfg).unwrap();
    let before = trainer.train_epoch(&mut ds, None, 0).unwrap().metrics;
    let after = trainer.train_epoch(&mut ds, None, 1).unwrap().metrics;
    assert!(after.loss_total < before.loss_total, "{} -> {}", before.loss_total, after.loss_total);
}

#[test]
fn relabels_start_on_schedule_and_name_real_samples() {
    let cfg = quick_config();
    let mut ds = small_blobs(4, 0.3);
    let original = ds.clone();
    let model = ScnModel::new(6, 4, &cfg).unwrap();
    let out = train_with(model, &mut ds, None, &cfg, Execution::Sequential).unwrap();
    assert!(!out.relabels.is_empty());
    let index: HashMap<u64, usize> = ds.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut labels = original.current_labels().to_vec();
    for r in &out.relabels {
        assert!(r.epoch >= cfg.relabel_start_epoch);
        assert!(r.p_max - r.p_given > cfg.margins.delta2);
        let i = index[&r.sample_id];
        assert_eq!(labels[i], r.old_label, "events replay in order");
        labels[i] = r.new_label;
    }
    assert_eq!(labels, ds.current_labels());
    assert_eq!(ds.clean_labels(), original.clean_labels());
    let per_epoch: usize = out.trace.iter().map(|m| m.relabel_events).sum();
    assert_eq!(per_epoch, out.relabels.len());
}

#[test]
fn relabel_csv_has_a_header_even_when_empty() {
    let mut buf = Vec::new();
    write_relabel_csv(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim(), "epoch,sample_id,old_label,new_label,p_max,p_given");
}

#[test]
fn learnable_margin_moves_and_stays_nonnegative() {
    let mut cfg = quick_config();
    cfg.margins.mode = scn_core::loss::MarginMode::Learnable;
    let mut ds = small_blobs(5, 0.2);
    let model = ScnModel::new(6, 4, &cfg).unwrap();
    let out = train_with(model, &mut ds, None, &cfg, Execution::Sequential).unwrap();
    let d: Vec<f64> = out.trace.iter().map(|m| m.delta1).collect();
    assert!(d.iter().all(|&x| x >= 0.0));
    assert!(d.iter().any(|&x| x != cfg.margins.delta1));

    let fixed = quick_config();
    let out = train_with(ScnModel::new(6, 4, &fixed).unwrap(), &mut small_blobs(5, 0.2), None, &fixed, Execution::Sequential)
        .unwrap();
    assert!(out.trace.iter().all(|m| m.delta1 == fixed.margins.delta1));
}

/// Off-diagonal flips land uniformly on the other classes.
#[test]
fn noise_targets_are_uniform() {
    let classes = 5;
    let mut counts = vec![vec![0usize; classes]; classes];
    for seed in 0..10 {
        let ds = generate_blobs(classes, 200, classes, 0.5, 100 + seed).unwrap();
        let noisy = inject_noise(&ds, NoiseSpec { ratio: 0.3, seed }).unwrap();
        for i in 0..noisy.len() {
            if noisy.corrupted()[i] {
                counts[noisy.clean_labels()[i]][noisy.current_labels()[i]] += 1;
            }
        }
    }
    // 4 targets per class: chi-square with 3 dof, 0.999 quantile is 16.27
    for (c, row) in counts.iter().enumerate() {
        assert_eq!(row[c], 0);
        let total: usize = row.iter().sum();
        assert_eq!(total, 600);
        let expected = total as f64 / (classes - 1) as f64;
        let chi2: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != c)
            .map(|(_, &o)| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.27, "class {c}: chi2 {chi2}, {row:?}");
    }
}

#[test]
fn comparison_pairs_share_data_and_init() {
    let spec = CompareSpec {
        data: quick_data(),
        config: quick_config(),
        noise_levels: vec![0.0, 0.2],
        seeds: vec![0, 1],
    };
    let report = compare(&spec, Execution::default()).unwrap();
    assert_eq!(report.levels.len(), 2);
    assert_eq!(report.pairs.len(), 4);
    for p in &report.pairs {
        assert_eq!((p.baseline.noise, p.baseline.seed), (p.scn.noise, p.scn.seed));
        assert_eq!(p.baseline.variant, "baseline");
        assert_eq!(p.baseline.relabel_events, 0);
        assert_eq!(p.baseline.trace[0].label_noise, p.scn.trace[0].label_noise);
    }
    let mut csv = Vec::new();
    report.write_summary_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);

    let again = compare(&spec, Execution::Sequential).unwrap();
    let accs = |r: &scn_core::train::CompareReport| -> Vec<u64> {
        r.runs().iter().map(|x| x.test_accuracy.to_bits()).collect()
    };
    assert_eq!(accs(&report), accs(&again));
}

#[test]
fn gamma_sweep_gives_one_row_per_value() {
    let table = ablation_grid(
        &quick_data(),
        &ScnConfig {
            epochs: 3,
            ..quick_config()
        },
        &AblationSweep::gamma_default(),
        0.2,
        &[0],
        Execution::default(),
    )
    .unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels.len(), 5);
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
}

#[test]
fn invalid_sweep_values_fail_before_training() {
    let err = ablation_grid(
        &quick_data(),
        &quick_config(),
        &AblationSweep::Beta(vec![0.5, 1.2]),
        0.2,
        &[0],
        Execution::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("1.2"), "{err}");
}

#[test]
fn module_rows_span_base_to_full() {
    let sweep = AblationSweep::modules_default();
    let AblationSweep::Modules(rows) = &sweep else { unreachable!() };
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0], ModuleSwitches::NONE);
    assert_eq!(*rows.last().unwrap(), ModuleSwitches::ALL);
}
