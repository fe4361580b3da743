mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scn_core::checkpoint::{decode, encode};
use scn_core::data::{generate_blobs, inject_noise, read_binary, read_csv, write_binary, write_csv, NoiseSpec};
use scn_core::loss::{argmax, high_group_size, total_loss, wce_loss, Classifier};
use scn_core::optim::StepDecay;
use scn_core::train::{epoch_order, ScnConfig, ScnModel};

use common::random_tensor;

#[test]
fn mechanism_suite() {
    for (name, result) in common::property_suite(128) {
        if let Err(e) = result {
            panic!("{name}: {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn total_loss_is_a_convex_mix(wce in 0.0f64..10.0, rr in 0.0f64..1.0, gamma in 0.0f64..=1.0) {
        let t = total_loss(wce, rr, gamma).unwrap();
        prop_assert!(t >= wce.min(rr) - 1e-12 && t <= wce.max(rr) + 1e-12);
    }

    #[test]
    fn high_group_never_empty(n in 2usize..500, beta in 0.001f64..0.999) {
        let m = high_group_size(n, beta);
        prop_assert!(m >= 1 && m < n);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), n in 1usize..10, d in 1usize..6, c in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clf = Classifier::from_weights(random_tensor(d, c, 3.0, &mut rng)).unwrap();
        let x = random_tensor(n, d, 3.0, &mut rng);
        let alphas: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * (i as f64 / n as f64)).collect();
        let out = wce_loss(&clf, &x, &alphas, &vec![0; n]).unwrap();
        for i in 0..n {
            let row = out.probabilities.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            // scaling by a positive alpha keeps the ranking of classes
            prop_assert_eq!(argmax(row), argmax(out.logits.row(i)));
        }
    }

    #[test]
    fn learning_rate_only_steps_down(base in 0.001f64..1.0, e in 0usize..60) {
        let s = StepDecay { base_lr: base, ..StepDecay::default() };
        prop_assert!(s.lr_at(e + 1) <= s.lr_at(e));
    }

    #[test]
    fn epoch_order_is_a_permutation(seed in any::<u64>(), epoch in 0usize..50, n in 1usize..300) {
        let mut order = epoch_order(seed, epoch, n);
        prop_assert_eq!(order.clone(), epoch_order(seed, epoch, n));
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn datasets_round_trip(seed in any::<u64>(), classes in 2usize..5, per_class in 2usize..12, ratio in 0.0f64..0.6) {
        let ds = generate_blobs(classes, per_class, 5, 0.4, seed).unwrap();
        let ds = inject_noise(&ds, NoiseSpec { ratio, seed }).unwrap();
        prop_assert_eq!(&read_binary(&write_binary(&ds)).unwrap(), &ds);
        let mut text = Vec::new();
        write_csv(&ds, &mut text).unwrap();
        prop_assert_eq!(&read_csv(std::str::from_utf8(&text).unwrap()).unwrap(), &ds);
    }

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), input in 1usize..8, classes in 2usize..6, bias in any::<bool>()) {
        let cfg = ScnConfig { init_seed: seed, hidden: vec![5, 4], feature_dim: 3, attention_bias: bias, ..ScnConfig::default() };
        let mut model = ScnModel::new(input, classes, &cfg).unwrap();
        model.delta1 = (seed % 1000) as f64 / 997.0;
        let bytes = encode(&model);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn truncated_checkpoints_are_rejected(cut in 0usize..200) {
        let model = ScnModel::new(3, 2, &ScnConfig { hidden: vec![4], feature_dim: 3, ..ScnConfig::default() }).unwrap();
        let bytes = encode(&model);
        let cut = cut % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }
}
