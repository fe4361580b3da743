//! `scn`: generate noisy blob datasets, train, compare against the plain
//! baseline, sweep ablations and check gradients.

mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scn_core::checkpoint::save_checkpoint;
use scn_core::data::{load_dataset, relabel_quality, save_dataset, LabeledDataset};
use scn_core::gradcheck::{run_gradcheck, Component};
use scn_core::loss::{write_relabel_csv, MarginMode};
use scn_core::parallel::parallel_available;
use scn_core::train::experiment::{prepare_data, write_run_relabels, write_run_traces, CompareSpec, DataSpec, RunSeeds};
use scn_core::train::{
    ablation_grid, compare, evaluate_with, train_with, write_metrics_csv, AblationSweep, ModuleSwitches, ScnConfig,
    ScnModel,
};
use scn_core::Execution;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "scn", version, about = "Noisy-label training with importance weighting, rank regularization and relabeling")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy training set and a clean test set.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Paired baseline vs full runs across noise levels and seeds.
    Compare(CompareArgs),
    /// Sweep one hyperparameter or the module switches.
    Ablate(AblateArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "SCN_OUT_DIR", default_value = "scn-out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON training config, or a manifest.json from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    /// Learn the rank margin instead of keeping it fixed.
    #[arg(long, conflicts_with = "no_rankreg")]
    delta1_learnable: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// First zero-based epoch with relabeling.
    #[arg(long, conflicts_with = "no_relabel")]
    relabel_start: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    no_weighting: bool,
    #[arg(long)]
    no_rankreg: bool,
    #[arg(long)]
    no_relabel: bool,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Standard deviation of each blob.
    #[arg(long)]
    spread: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fraction of each class to mislabel.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "bin")]
    format: Format,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Train on a dataset file instead of generated blobs.
    #[arg(long = "data", value_name = "PATH", conflicts_with_all = ["noise", "classes", "train_per_class", "test_per_class", "dim", "spread"])]
    data_file: Option<PathBuf>,
    /// Clean test set scored after every epoch.
    #[arg(long, value_name = "PATH", requires = "data_file")]
    test_data: Option<PathBuf>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Noise ratios, comma separated.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Gamma,
    Beta,
    Delta1,
    Delta2,
    Modules,
}

#[derive(Args)]
struct AblateArgs {
    /// Swept quantity; taken from the manifest when omitted.
    #[arg(value_enum)]
    axis: Option<Axis>,
    /// Sweep values, comma separated. Module rows are tags such as `base`, `W`, `W+R+L`.
    #[arg(long, value_delimiter = ',', requires = "axis")]
    values: Option<Vec<String>>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Perturb one component's analytic gradient (negative control).
    #[arg(long, hide = true, value_parser = parse_component)]
    corrupt: Option<Component>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

fn parse_component(s: &str) -> std::result::Result<Component, String> {
    Component::parse(s).ok_or_else(|| format!("unknown component `{s}` (wce, rr, attention, total)"))
}

fn load_base(path: Option<&PathBuf>) -> Result<Manifest> {
    path.map_or_else(|| Ok(Manifest::default()), |p| Manifest::load(p))
}

fn apply_config(cfg: &mut ScnConfig, a: &ConfigArgs) {
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.beta, a.beta);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.margins.delta1, a.delta1);
    set(&mut cfg.margins.delta2, a.delta2);
    set(&mut cfg.schedule.base_lr, a.lr);
    set(&mut cfg.momentum, a.momentum);
    set(&mut cfg.weight_decay, a.weight_decay);
    if a.delta1_learnable {
        cfg.margins.mode = MarginMode::Learnable;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.relabel_start {
        cfg.relabel_start_epoch = v;
    }
    if let Some(v) = &a.hidden {
        cfg.hidden = v.clone();
    }
    if let Some(v) = a.feature_dim {
        cfg.feature_dim = v;
    }
    if a.no_weighting {
        cfg.modules.weighting = false;
    }
    if a.no_rankreg {
        cfg.modules.rank_reg = false;
    }
    if a.no_relabel {
        cfg.modules.relabel = false;
    }
}

fn apply_data(data: &mut DataSpec, a: &DataArgs) {
    if let Some(v) = a.classes {
        data.classes = v;
    }
    if let Some(v) = a.train_per_class {
        data.train_per_class = v;
    }
    if let Some(v) = a.test_per_class {
        data.test_per_class = v;
    }
    if let Some(v) = a.dim {
        data.dim = v;
    }
    if let Some(v) = a.spread {
        data.spread = v;
    }
}

fn resolve(path: Option<&PathBuf>, command: &str, cfg: Option<&ConfigArgs>, data: &DataArgs) -> Result<Manifest> {
    let mut m = load_base(path)?;
    m.command = command.to_string();
    if let Some(a) = cfg {
        apply_config(&mut m.config, a);
    }
    apply_data(&mut m.data, data);
    m.config.validate().context("invalid training configuration")?;
    Ok(m)
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> scn_core::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bytes(name, &buf)
    }

    fn bytes(&self, name: &str, data: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, data).with_context(|| format!("cannot write {}", p.display()))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.bytes(name, s.as_bytes())
    }

    fn manifest(&self, m: &Manifest) -> Result<()> {
        self.bytes("manifest.json", m.to_json().as_bytes())
    }
}

fn single_noise(m: &mut Manifest, flag: Option<f64>, default: f64) -> f64 {
    let noise = flag.or(m.noise.first().copied()).unwrap_or(default);
    m.noise = vec![noise];
    noise
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut m = resolve(a.config.as_ref(), "gen-data", None, &a.data)?;
    let noise = single_noise(&mut m, a.noise, 0.3);
    let seed = a.seed.or(m.seed).unwrap_or(0);
    m.seed = Some(seed);
    let (train, test) = prepare_data(&m.data, noise, &RunSeeds::derive(seed))?;
    let out = Output::create(&a.out.out)?;
    let ext = match a.format {
        Format::Bin => "bin",
        Format::Csv => "csv",
    };
    let (tp, sp) = (out.path(&format!("train.{ext}")), out.path(&format!("test.{ext}")));
    save_dataset(&train, &tp)?;
    save_dataset(&test, &sp)?;
    out.manifest(&m)?;
    println!(
        "wrote {} ({} samples, {} mislabeled) and {} ({} samples)",
        tp.display(),
        train.len(),
        train.mislabeled_count(),
        sp.display(),
        test.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    final_train_accuracy: f64,
    test_accuracy: Option<f64>,
    test_mean_class_accuracy: Option<f64>,
    alpha_clean: Option<f64>,
    alpha_mislabeled: Option<f64>,
    relabel_events: usize,
    relabel_precision: Option<f64>,
    relabel_recall: f64,
    final_label_noise: f64,
    final_delta1: f64,
}

fn load_checked(path: &Path) -> Result<LabeledDataset> {
    load_dataset(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

fn train(a: TrainArgs, exec: Execution) -> Result<()> {
    let mut m = resolve(a.cfg.config.as_ref(), "train", Some(&a.cfg), &a.data)?;
    let seed = a.seed.or(m.seed).unwrap_or(0);
    m.seed = Some(seed);
    let seeds = RunSeeds::derive(seed);
    m.config.init_seed = seeds.init;
    m.config.shuffle_seed = seeds.shuffle;
    if a.data_file.is_some() {
        m.train_data = a.data_file.clone();
        m.test_data = a.test_data.clone();
        m.noise.clear();
    }
    let (mut train_set, test_set) = match &m.train_data {
        Some(p) => {
            let test = m.test_data.as_ref().map(|t| load_checked(t)).transpose()?;
            (load_checked(p)?, test)
        }
        None => {
            let noise = single_noise(&mut m, a.noise, 0.3);
            let (tr, te) = prepare_data(&m.data, noise, &seeds)?;
            (tr, Some(te))
        }
    };
    if let Some(t) = &test_set {
        if (t.dim(), t.classes()) != (train_set.dim(), train_set.classes()) {
            bail!(
                "test set has dim {} and {} classes but training set has dim {} and {}",
                t.dim(),
                t.classes(),
                train_set.dim(),
                train_set.classes()
            );
        }
    }
    let cfg = m.config.clone();
    let model = ScnModel::new(train_set.dim(), train_set.classes(), &cfg)?;
    let outcome = train_with(model, &mut train_set, test_set.as_ref(), &cfg, exec)?;
    let quality = relabel_quality(&train_set, &outcome.relabels)?;
    let last = outcome.trace.last().context("no epochs were run")?;
    let eval = test_set.as_ref().map(|t| evaluate_with(&outcome.model, t, exec)).transpose()?;

    let out = Output::create(&a.out.out)?;
    out.write("metrics.csv", |w| write_metrics_csv(w, &outcome.trace))?;
    out.write("relabels.csv", |w| write_relabel_csv(w, &outcome.relabels))?;
    save_checkpoint(&outcome.model, &out.path("model.ckpt"))?;
    let summary = TrainSummary {
        epochs: outcome.trace.len(),
        final_train_accuracy: last.train_accuracy,
        test_accuracy: eval.as_ref().map(|e| e.accuracy),
        test_mean_class_accuracy: eval.as_ref().map(|e| e.mean_class_accuracy),
        alpha_clean: last.alpha_clean,
        alpha_mislabeled: last.alpha_mislabeled,
        relabel_events: outcome.relabels.len(),
        relabel_precision: quality.precision,
        relabel_recall: quality.recall,
        final_label_noise: last.label_noise,
        final_delta1: outcome.model.delta1,
    };
    out.json("summary.json", &summary)?;
    out.manifest(&m)?;
    match summary.test_accuracy {
        Some(acc) => println!("{} epochs, test accuracy {acc:.4}, {} relabels", summary.epochs, summary.relabel_events),
        None => println!("{} epochs, train accuracy {:.4}", summary.epochs, summary.final_train_accuracy),
    }
    Ok(())
}

fn seeds_or(m: &Manifest, flag: Option<Vec<u64>>) -> Vec<u64> {
    flag.or_else(|| (!m.seeds.is_empty()).then(|| m.seeds.clone()))
        .unwrap_or_else(|| (0..5).collect())
}

fn compare_cmd(a: CompareArgs, exec: Execution) -> Result<()> {
    let mut m = resolve(a.cfg.config.as_ref(), "compare", Some(&a.cfg), &a.data)?;
    m.noise = a
        .noise
        .or_else(|| (!m.noise.is_empty()).then(|| m.noise.clone()))
        .unwrap_or_else(|| vec![0.1, 0.2, 0.3]);
    m.seeds = seeds_or(&m, a.seeds);
    m.seed = None;
    let spec = CompareSpec {
        data: m.data.clone(),
        config: m.config.clone(),
        noise_levels: m.noise.clone(),
        seeds: m.seeds.clone(),
    };
    let report = compare(&spec, exec)?;
    let out = Output::create(&a.out.out)?;
    out.write("comparison.csv", |w| report.write_summary_csv(w))?;
    out.write("metrics.csv", |w| write_run_traces(w, &report.runs()))?;
    out.write("relabels.csv", |w| write_run_relabels(w, &report.runs()))?;
    out.json("summary.json", &report)?;
    out.manifest(&m)?;
    println!("noise  baseline  scn     delta   wins");
    for l in &report.levels {
        println!(
            "{:<5}  {:.4}    {:.4}  {:+.4}  {}/{}",
            l.noise, l.baseline_mean_accuracy, l.scn_mean_accuracy, l.delta, l.scn_wins, l.seeds
        );
    }
    Ok(())
}

fn parse_floats(values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("`{v}` is not a number")))
        .collect()
}

fn parse_modules(tag: &str) -> Result<ModuleSwitches> {
    let mut s = ModuleSwitches::NONE;
    if tag.trim() == "base" {
        return Ok(s);
    }
    for part in tag.split('+') {
        match part.trim() {
            "W" => s.weighting = true,
            "R" => s.rank_reg = true,
            "L" => s.relabel = true,
            other => bail!("unknown module `{other}` in `{tag}` (expected base or W, R, L joined by +)"),
        }
    }
    Ok(s)
}

fn sweep_for(axis: Axis, values: Option<&[String]>, learnable: bool) -> Result<AblationSweep> {
    let floats = |default: AblationSweep| -> Result<AblationSweep> {
        let Some(v) = values else { return Ok(default) };
        let v = parse_floats(v)?;
        Ok(match default {
            AblationSweep::Gamma(_) => AblationSweep::Gamma(v),
            AblationSweep::Beta(_) => AblationSweep::Beta(v),
            AblationSweep::Delta2(_) => AblationSweep::Delta2(v),
            AblationSweep::Delta1 { learnable, .. } => AblationSweep::Delta1 { values: v, learnable },
            other => other,
        })
    };
    match axis {
        Axis::Gamma => floats(AblationSweep::gamma_default()),
        Axis::Beta => floats(AblationSweep::beta_default()),
        Axis::Delta1 => floats(AblationSweep::delta1_default(learnable)),
        Axis::Delta2 => floats(AblationSweep::delta2_default()),
        Axis::Modules => match values {
            None => Ok(AblationSweep::modules_default()),
            Some(v) => Ok(AblationSweep::Modules(v.iter().map(|t| parse_modules(t)).collect::<Result<_>>()?)),
        },
    }
}

fn ablate(a: AblateArgs, exec: Execution) -> Result<()> {
    let mut m = resolve(a.cfg.config.as_ref(), "ablate", Some(&a.cfg), &a.data)?;
    let sweep = match (a.axis, m.sweep.take()) {
        (Some(axis), _) => sweep_for(axis, a.values.as_deref(), a.cfg.delta1_learnable)?,
        (None, Some(s)) => s,
        (None, None) => bail!("name the swept quantity (gamma, beta, delta1, delta2 or modules) or pass a manifest with --config"),
    };
    let noise = single_noise(&mut m, a.noise, 0.3);
    m.seeds = seeds_or(&m, a.seeds);
    m.seed = None;
    m.sweep = Some(sweep.clone());
    let table = ablation_grid(&m.data, &m.config, &sweep, noise, &m.seeds, exec)?;
    let out = Output::create(&a.out.out)?;
    out.write("ablation.csv", |w| table.write_csv(w))?;
    out.write("metrics.csv", |w| write_run_traces(w, &table.runs()))?;
    out.write("relabels.csv", |w| write_run_relabels(w, &table.runs()))?;
    out.json("summary.json", &table)?;
    out.manifest(&m)?;
    println!("{:<8}  accuracy  mean-class", table.axis);
    for r in &table.rows {
        println!("{:<8}  {:.4}    {:.4}", r.label, r.mean_test_accuracy, r.mean_class_accuracy);
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs, exec: Execution) -> Result<bool> {
    let mut m = load_base(a.config.as_ref())?;
    m.command = "gradcheck".into();
    let mut g = m.gradcheck.take().unwrap_or_default();
    if let Some(v) = a.instances {
        g.instances = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.tolerance {
        g.tolerance = v;
    }
    if let Some(v) = a.step {
        g.step = v;
    }
    if a.corrupt.is_some() {
        g.corrupt = a.corrupt;
    }
    m.seed = Some(g.seed);
    let report = run_gradcheck(&g, exec)?;
    m.gradcheck = Some(g);
    let out = Output::create(&a.out.out)?;
    out.json("summary.json", &report)?;
    out.manifest(&m)?;
    let mut stdout = std::io::stdout().lock();
    for r in &report.results {
        writeln!(
            stdout,
            "{:<9} max relative error {:.3e} over {} instances: {}",
            r.component.name(),
            r.max_rel_error,
            r.instances,
            if r.passed { "ok" } else { "FAIL" }
        )?;
    }
    let failures = report.failures();
    if !failures.is_empty() {
        let names: Vec<&str> = failures.iter().map(Component::name).collect();
        writeln!(stdout, "gradient check failed for {} (tolerance {:e})", names.join(", "), report.tolerance)?;
    }
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential || !parallel_available() {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::GenData(a) => gen_data(a)?,
        Command::Train(a) => train(a, exec)?,
        Command::Compare(a) => compare_cmd(a, exec)?,
        Command::Ablate(a) => ablate(a, exec)?,
        Command::Gradcheck(a) => return gradcheck(a, exec),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
