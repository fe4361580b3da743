//! Paired baseline / weighting-only / full runs on the default blobs.
//!
//! `cargo run --release -p scn-core --example pilot -- [spread] [seeds]`

use scn_core::train::experiment::DataSpec;
use scn_core::train::{ablation_grid, AblationSweep, ModuleSwitches, ScnConfig};
use scn_core::Execution;

fn main() -> scn_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let spread: f64 = args.next().map_or(scn_core::train::experiment::DEFAULT_SPREAD, |s| s.parse().unwrap());
    let seeds: u64 = args.next().map_or(5, |s| s.parse().unwrap());
    let data = DataSpec { spread, ..DataSpec::default() };
    let weighting = ModuleSwitches { weighting: true, rank_reg: false, relabel: false };
    let wr = ModuleSwitches { weighting: true, rank_reg: true, relabel: false };
    let sweep = AblationSweep::Modules(vec![ModuleSwitches::NONE, weighting, wr, ModuleSwitches::ALL]);
    let mut base = ScnConfig::default();
    if let Ok(wd) = std::env::var("PILOT_WD") {
        base.weight_decay = wd.parse().unwrap();
    }
    let levels: Vec<f64> = std::env::var("PILOT_NOISE").map_or(vec![0.1, 0.3], |v| v.split(',').map(|x| x.parse().unwrap()).collect());
    let offset: u64 = std::env::var("PILOT_SEED_OFFSET").map_or(0, |v| v.parse().unwrap());
    let seeds: Vec<u64> = (offset..offset + seeds).collect();
    for noise in levels {
        let t = std::time::Instant::now();
        let table = ablation_grid(&data, &base, &sweep, noise, &seeds, Execution::default())?;
        println!("spread {spread} noise {noise} ({:.1}s)", t.elapsed().as_secs_f64());
        for row in &table.rows {
            let accs: Vec<String> = row.per_seed_accuracy.iter().map(|a| format!("{a:.4}")).collect();
            println!(
                "  {:8} mean {:.4} [{}] sep {:?} prec {:?}",
                row.label,
                row.mean_test_accuracy,
                accs.join(" "),
                row.alpha_separation_mean,
                row.relabel_precision_mean
            );
            for r in &row.runs {
                if r.relabel_events > 0 || r.alpha_clean.is_some() {
                    println!(
                        "      seed {} clean {:?} bad {:?} inj {:?} events {} prec {:?} rec {:.3}",
                        r.seed, r.alpha_clean, r.alpha_mislabeled, r.alpha_injected, r.relabel_events, r.relabel_precision, r.relabel_recall
                    );
                }
            }
        }
        if std::env::var("PILOT_TRACE").is_ok() {
            for row in &table.rows {
                let r = &row.runs[0];
                for m in &r.trace {
                    println!(
                        "    {} e{} loss {:.4} test {:?} clean {:?} bad {:?} inj {:?} ev {} noise {:.3}",
                        row.label, m.epoch, m.loss_total, m.test_accuracy, m.alpha_clean, m.alpha_mislabeled, m.alpha_injected, m.relabel_events, m.label_noise
                    );
                }
            }
        }
    }
    Ok(())
}
