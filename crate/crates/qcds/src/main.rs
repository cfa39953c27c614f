//! Experiment front end: train designs, run the three search strategies,
//! evaluate tiled transfers, and render figures. Every run persists its
//! resolved configuration, a manifest, and CSV results in the output
//! directory; re-running a persisted config reproduces the CSVs byte for
//! byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qcds::circuit::{make_benchmark, BenchmarkKind};
use qcds::data::{self, Dataset, Split};
use qcds::design::Design;
use qcds::error::Error;
use qcds::report::{self, BoTraceEntry, RankedEntry, Series};
use qcds::search_bo::{run_bo, BoConfig};
use qcds::search_random::{generate_pool, halving_search, Stage};
use qcds::search_rl::{run_rl_search, Metric, RlConfig, SampleMode};
use qcds::trainer::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "qcds", version, about = "Quantum circuit design search laboratory")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single design and export its learning history
    Train(TrainArgs),
    /// Run a design-search strategy
    #[command(subcommand)]
    Search(SearchCommand),
    /// Train a (possibly tiled) design and report generalization metrics
    Eval(EvalArgs),
    /// Render SVG figures from exported CSVs
    Plot(PlotArgs),
    /// Re-execute a persisted run configuration
    Run(RunArgs),
}

#[derive(Subcommand)]
enum SearchCommand {
    /// Dissimilar random pool + successive halving
    Random(RandomArgs),
    /// REINFORCE controller feedback loop
    Rl(RlArgs),
    /// Gaussian-process Bayesian optimization
    Bo(BoArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// LIBSVM dataset file
    #[arg(long)]
    dataset: PathBuf,
    /// Circuit depth in layers
    #[arg(long, default_value_t = 6)]
    layers: usize,
    /// train,validation,test fractions
    #[arg(long, default_value = "0.4,0.3,0.3", value_parser = parse_split)]
    split: (f64, f64, f64),
    /// Master seed (falls back to QCDS_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Mini-batch size
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Learning rate of the circuit optimizer
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Benchmark name (bench_ry_cx, bench_ry_cz, bench_ry_cx_reupload) or
    /// a design JSON path
    #[arg(long)]
    design: String,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    /// Tile a narrower design up to the dataset width
    #[arg(long)]
    tile: bool,
}

#[derive(Args, Clone)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    design: String,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long)]
    tile: bool,
}

#[derive(Args, Clone)]
struct RandomArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Pool size
    #[arg(long, default_value_t = 200)]
    pool: usize,
    /// Pairwise similarity ceiling for the pool
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
    /// Halving stages as epochs:keep pairs, e.g. 2:0.5,5:0.5,10:0.4
    #[arg(long, default_value = "2:0.5,5:0.5,10:0.4", value_parser = parse_schedule)]
    schedule: ScheduleArg,
    /// Epochs for the final full training of survivors
    #[arg(long, default_value_t = 150)]
    final_epochs: usize,
}

#[derive(Args, Clone)]
struct RlArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sampling mode of the controller
    #[arg(long, value_enum, default_value_t = ModeArg::Layer)]
    mode: ModeArg,
    /// Reward metric
    #[arg(long, value_enum, default_value_t = MetricArg::ValLoss)]
    metric: MetricArg,
    /// Use the hybrid-quantum controller
    #[arg(long)]
    hybrid: bool,
    #[arg(long, default_value_t = 20)]
    inner_epochs: usize,
    #[arg(long, default_value_t = 100)]
    max_loops: usize,
    #[arg(long, default_value_t = 0.1)]
    controller_lr: f64,
    #[arg(long, default_value_t = 0.01)]
    entropy_coeff: f64,
}

#[derive(Args, Clone)]
struct BoArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 30)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 2048)]
    candidates: usize,
    #[arg(long, default_value_t = 10)]
    inner_epochs: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Whole)]
    mode: ModeArg,
}

#[derive(Args, Clone)]
struct PlotArgs {
    /// History CSVs for a four-panel loss/accuracy figure
    #[arg(long, num_args = 1..)]
    history: Vec<PathBuf>,
    /// Series labels matching --history (defaults to file stems)
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Controller learning-curve CSV for a single-panel figure
    #[arg(long)]
    controller: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// A config.json written by a previous run
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the re-run (default: the persisted one)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum ModeArg {
    Layer,
    Whole,
}

impl From<ModeArg> for SampleMode {
    fn from(m: ModeArg) -> SampleMode {
        match m {
            ModeArg::Layer => SampleMode::Layer,
            ModeArg::Whole => SampleMode::Whole,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum MetricArg {
    ValLoss,
    ValAcc,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::ValLoss => Metric::ValLoss,
            MetricArg::ValAcc => Metric::ValAcc,
        }
    }
}

fn parse_split(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated fractions".into());
    }
    let mut v = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p.parse().map_err(|_| format!("bad fraction {p:?}"))?;
    }
    Ok((v[0], v[1], v[2]))
}

#[derive(Clone, Serialize, Deserialize)]
struct ScheduleArg(Vec<(usize, f64)>);

fn parse_schedule(s: &str) -> Result<ScheduleArg, String> {
    let mut stages = Vec::new();
    for part in s.split(',') {
        let (e, k) = part
            .split_once(':')
            .ok_or_else(|| format!("stage {part:?} is not epochs:keep"))?;
        let epochs: usize = e.parse().map_err(|_| format!("bad epoch count {e:?}"))?;
        let keep: f64 = k.parse().map_err(|_| format!("bad keep fraction {k:?}"))?;
        stages.push((epochs, keep));
    }
    if stages.is_empty() {
        return Err("schedule is empty".into());
    }
    Ok(ScheduleArg(stages))
}

/// The resolved, persisted description of a run.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum ExperimentConfig {
    Train {
        dataset: PathBuf,
        design: String,
        tile: bool,
        layers: usize,
        epochs: usize,
        split: (f64, f64, f64),
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        out: PathBuf,
    },
    SearchRandom {
        dataset: PathBuf,
        layers: usize,
        pool: usize,
        threshold: f64,
        schedule: Vec<(usize, f64)>,
        final_epochs: usize,
        split: (f64, f64, f64),
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        out: PathBuf,
    },
    SearchRl {
        dataset: PathBuf,
        layers: usize,
        mode: ModeArg,
        metric: MetricArg,
        hybrid: bool,
        inner_epochs: usize,
        max_loops: usize,
        controller_lr: f64,
        entropy_coeff: f64,
        split: (f64, f64, f64),
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        out: PathBuf,
    },
    SearchBo {
        dataset: PathBuf,
        layers: usize,
        budget: usize,
        n_init: usize,
        candidates: usize,
        inner_epochs: usize,
        mode: ModeArg,
        split: (f64, f64, f64),
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        out: PathBuf,
    },
}

impl ExperimentConfig {
    fn out_dir(&self) -> &Path {
        match self {
            ExperimentConfig::Train { out, .. }
            | ExperimentConfig::SearchRandom { out, .. }
            | ExperimentConfig::SearchRl { out, .. }
            | ExperimentConfig::SearchBo { out, .. } => out,
        }
    }

    fn set_out(&mut self, dir: PathBuf) {
        match self {
            ExperimentConfig::Train { out, .. }
            | ExperimentConfig::SearchRandom { out, .. }
            | ExperimentConfig::SearchRl { out, .. }
            | ExperimentConfig::SearchBo { out, .. } => *out = dir,
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("QCDS_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn load_dataset(path: &Path) -> Result<Dataset, Error> {
    Ok(data::scale_features(&data::load_libsvm(path)?))
}

/// Resolve a design flag: a benchmark name or a design JSON file.
fn resolve_design(
    name: &str,
    n_qubits: usize,
    n_layers: usize,
    tile: bool,
) -> Result<Design, Error> {
    let bench = match name {
        "bench_ry_cx" => Some(BenchmarkKind::RyCx),
        "bench_ry_cz" => Some(BenchmarkKind::RyCz),
        "bench_ry_cx_reupload" => Some(BenchmarkKind::RyCxReupload),
        _ => None,
    };
    let design = match bench {
        Some(kind) => make_benchmark(kind, n_qubits, n_layers)?,
        None => {
            let text = std::fs::read_to_string(name).map_err(|e| {
                Error::Config(format!("cannot read design file {name}: {e}"))
            })?;
            Design::from_json(&text)?
        }
    };
    if tile && design.n_qubits() < n_qubits {
        return design.tile(n_qubits);
    }
    Ok(design)
}

fn write_manifest(dir: &Path, config: &ExperimentConfig, elapsed_secs: f64) -> Result<(), Error> {
    let manifest = serde_json::json!({
        "tool": "qcds",
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_secs": elapsed_secs,
        "finished_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "command": serde_json::to_value(config).expect("config serializes"),
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(())
}

fn prepare_out(dir: &Path, config: &ExperimentConfig) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(config).expect("config serializes") + "\n",
    )?;
    Ok(())
}

fn dataset_split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split, Error> {
    data::split(dataset, fractions, seed)
}

fn execute(config: &ExperimentConfig) -> Result<(), Error> {
    let started = Instant::now();
    let dir = config.out_dir().to_path_buf();
    prepare_out(&dir, config)?;
    match config {
        ExperimentConfig::Train {
            dataset,
            design,
            tile,
            layers,
            epochs,
            split,
            seed,
            batch_size,
            learning_rate,
            ..
        } => {
            let data = load_dataset(dataset)?;
            let s = dataset_split(&data, *split, *seed)?;
            let d = resolve_design(design, data.n_features, *layers, *tile)?;
            let train_config = TrainConfig {
                epochs: *epochs,
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                seed: *seed,
                ..Default::default()
            };
            let (theta, history) = train(&d, &data, &s, &train_config)?;
            report::write_history_csv(&dir.join("history.csv"), &history)?;
            std::fs::write(dir.join("design.json"), d.to_json() + "\n")?;
            std::fs::write(
                dir.join("theta.json"),
                serde_json::to_string(&theta).expect("theta serializes") + "\n",
            )?;
            let last = history.final_record().expect("epochs >= 1");
            println!(
                "final: train_loss={:.6} train_acc={:.4} val_loss={} val_acc={} test_loss={} test_acc={}",
                last.train_loss,
                last.train_acc,
                fmt_opt(last.val_loss),
                fmt_opt(last.val_acc),
                fmt_opt(last.test_loss),
                fmt_opt(last.test_acc),
            );
        }
        ExperimentConfig::SearchRandom {
            dataset,
            layers,
            pool,
            threshold,
            schedule,
            final_epochs,
            split,
            seed,
            batch_size,
            learning_rate,
            ..
        } => {
            let data = load_dataset(dataset)?;
            let s = dataset_split(&data, *split, *seed)?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(*seed);
            let designs = generate_pool(&mut rng, *pool, *threshold, data.n_features, *layers)?;
            let stages: Vec<Stage> = schedule
                .iter()
                .map(|&(epochs, keep_fraction)| Stage {
                    epochs,
                    keep_fraction,
                })
                .collect();
            let base = TrainConfig {
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                ..Default::default()
            };
            let outcome =
                halving_search(&designs, &stages, *final_epochs, &data, &s, &base, *seed)?;
            let design_dir = dir.join("designs");
            std::fs::create_dir_all(&design_dir)?;
            let mut entries = Vec::new();
            for r in &outcome.ranked {
                let rel = format!("designs/rank_{:03}.json", r.rank);
                std::fs::write(dir.join(&rel), designs[r.pool_index].to_json() + "\n")?;
                entries.push(RankedEntry {
                    rank: r.rank,
                    design_path: rel,
                    val_loss: r.val_loss,
                    val_acc: r.val_acc,
                    test_loss: r.test_loss,
                    test_acc: r.test_acc,
                });
            }
            report::write_ranked_csv(&dir.join("ranked.csv"), &entries)?;
            println!(
                "ranked {} survivors; stage rank correlations: {:?}",
                entries.len(),
                outcome.stage_rank_correlations
            );
        }
        ExperimentConfig::SearchRl {
            dataset,
            layers,
            mode,
            metric,
            hybrid,
            inner_epochs,
            max_loops,
            controller_lr,
            entropy_coeff,
            split,
            seed,
            batch_size,
            learning_rate,
            ..
        } => {
            let data = load_dataset(dataset)?;
            let s = dataset_split(&data, *split, *seed)?;
            let rl = RlConfig {
                mode: (*mode).into(),
                metric: (*metric).into(),
                hybrid: *hybrid,
                inner_epochs: *inner_epochs,
                max_loops: *max_loops,
                controller_lr: *controller_lr,
                entropy_coeff: *entropy_coeff,
                seed: *seed,
                ..Default::default()
            };
            let base = TrainConfig {
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                ..Default::default()
            };
            let outcome = run_rl_search(&rl, *layers, &data, &s, &base)?;
            report::write_controller_csv(&dir.join("controller.csv"), &outcome.curve)?;
            std::fs::write(dir.join("best_design.json"), outcome.best_design.to_json() + "\n")?;
            println!(
                "{} after {} loops; best val_loss={:.6} val_acc={:.4}",
                if outcome.converged {
                    "entropy converged"
                } else {
                    "loop budget exhausted"
                },
                outcome.curve.len(),
                outcome.best_val_loss,
                outcome.best_val_acc,
            );
        }
        ExperimentConfig::SearchBo {
            dataset,
            layers,
            budget,
            n_init,
            candidates,
            inner_epochs,
            mode,
            split,
            seed,
            batch_size,
            learning_rate,
            ..
        } => {
            let data = load_dataset(dataset)?;
            let s = dataset_split(&data, *split, *seed)?;
            let bo = BoConfig {
                budget: *budget,
                n_init: *n_init,
                candidates_per_step: *candidates,
                inner_epochs: *inner_epochs,
                mode: (*mode).into(),
                seed: *seed,
            };
            let base = TrainConfig {
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                ..Default::default()
            };
            let outcome = run_bo(&bo, *layers, &data, &s, &base)?;
            let design_dir = dir.join("designs");
            std::fs::create_dir_all(&design_dir)?;
            let mut entries = Vec::new();
            for step in &outcome.trace {
                let rel = format!("designs/bo_{:03}.json", step.iteration);
                std::fs::write(dir.join(&rel), step.design_json.clone() + "\n")?;
                entries.push(BoTraceEntry {
                    iteration: step.iteration,
                    design_path: rel,
                    val_loss: step.val_loss,
                    incumbent_loss: step.incumbent_loss,
                });
            }
            report::write_bo_csv(&dir.join("bo_trace.csv"), &entries)?;
            std::fs::write(dir.join("best_design.json"), outcome.best_design.to_json() + "\n")?;
            println!(
                "incumbent val_loss={:.6} val_acc={:.4} after {} evaluations",
                outcome.best_val_loss,
                outcome.best_val_acc,
                outcome.trace.len()
            );
        }
    }
    write_manifest(&dir, config, started.elapsed().as_secs_f64())?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn run_plot(args: &PlotArgs) -> Result<(), Error> {
    if args.history.is_empty() && args.controller.is_none() {
        return Err(Error::Config(
            "plot needs --history files and/or --controller".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    if !args.history.is_empty() {
        if !args.labels.is_empty() && args.labels.len() != args.history.len() {
            return Err(Error::Config(format!(
                "{} labels for {} histories",
                args.labels.len(),
                args.history.len()
            )));
        }
        let mut histories = Vec::new();
        for (i, path) in args.history.iter().enumerate() {
            let label = args.labels.get(i).cloned().unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("run {}", i + 1))
            });
            histories.push((label, report::read_history_csv(path)?));
        }
        let svg = report::four_panel_svg(&histories)?;
        let out = args.out.join("history.svg");
        std::fs::write(&out, svg)?;
        println!("wrote {}", out.display());
    }
    if let Some(path) = &args.controller {
        let rows = report::read_controller_csv(path)?;
        let svg = report::line_chart_svg(
            "Controller learning curve",
            "loop",
            "controller loss",
            &[Series {
                label: path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "controller".into()),
                points: rows.iter().map(|&(l, loss, _)| (l as f64, loss)).collect(),
            }],
        );
        let out = args.out.join("controller.svg");
        std::fs::write(&out, svg)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn build_config(command: &Command) -> Option<ExperimentConfig> {
    match command {
        Command::Train(a) => Some(ExperimentConfig::Train {
            dataset: a.common.dataset.clone(),
            design: a.design.clone(),
            tile: a.tile,
            layers: a.common.layers,
            epochs: a.epochs,
            split: a.common.split,
            seed: resolve_seed(a.common.seed),
            batch_size: a.common.batch_size,
            learning_rate: a.common.lr,
            out: a.common.out.clone(),
        }),
        Command::Eval(a) => Some(ExperimentConfig::Train {
            dataset: a.common.dataset.clone(),
            design: a.design.clone(),
            tile: a.tile,
            layers: a.common.layers,
            epochs: a.epochs,
            split: a.common.split,
            seed: resolve_seed(a.common.seed),
            batch_size: a.common.batch_size,
            learning_rate: a.common.lr,
            out: a.common.out.clone(),
        }),
        Command::Search(SearchCommand::Random(a)) => Some(ExperimentConfig::SearchRandom {
            dataset: a.common.dataset.clone(),
            layers: a.common.layers,
            pool: a.pool,
            threshold: a.threshold,
            schedule: a.schedule.0.clone(),
            final_epochs: a.final_epochs,
            split: a.common.split,
            seed: resolve_seed(a.common.seed),
            batch_size: a.common.batch_size,
            learning_rate: a.common.lr,
            out: a.common.out.clone(),
        }),
        Command::Search(SearchCommand::Rl(a)) => Some(ExperimentConfig::SearchRl {
            dataset: a.common.dataset.clone(),
            layers: a.common.layers,
            mode: a.mode,
            metric: a.metric,
            hybrid: a.hybrid,
            inner_epochs: a.inner_epochs,
            max_loops: a.max_loops,
            controller_lr: a.controller_lr,
            entropy_coeff: a.entropy_coeff,
            split: a.common.split,
            seed: resolve_seed(a.common.seed),
            batch_size: a.common.batch_size,
            learning_rate: a.common.lr,
            out: a.common.out.clone(),
        }),
        Command::Search(SearchCommand::Bo(a)) => Some(ExperimentConfig::SearchBo {
            dataset: a.common.dataset.clone(),
            layers: a.common.layers,
            budget: a.budget,
            n_init: a.n_init,
            candidates: a.candidates,
            inner_epochs: a.inner_epochs,
            mode: a.mode,
            split: a.common.split,
            seed: resolve_seed(a.common.seed),
            batch_size: a.common.batch_size,
            learning_rate: a.common.lr,
            out: a.common.out.clone(),
        }),
        Command::Plot(_) | Command::Run(_) => None,
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Ingestion(msg) if msg.contains("cannot open dataset") => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Plot(args) => run_plot(args),
        Command::Run(args) => (|| {
            let text = std::fs::read_to_string(&args.config).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", args.config.display()))
            })?;
            let mut config: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad config file: {e}")))?;
            if let Some(out) = &args.out {
                config.set_out(out.clone());
            }
            execute(&config)
        })(),
        other => {
            let config = build_config(other).expect("non-plot commands build a config");
            execute(&config)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
