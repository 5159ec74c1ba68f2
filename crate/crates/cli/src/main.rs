use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use smgraph::checkpoint;
use smgraph::harness::{
    evaluate_record, find_split, parse_curve_csv, render_svg, run_bench, run_experiments, run_sweep,
    train, write_report, EvalConfig, ExperimentPlan, ModelKind, ModelSettings, Report, Supervision, Sweep,
    SweepParameter, TrainConfig,
};
use smgraph::sim::{generate_splits_with, read_dataset, read_split, write_dataset, GenerateOptions, SplitName};

const THREADS_VAR: &str = "SMGRAPH_THREADS";
const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Parser)]
#[command(name = "smgraph", version, about = "Soft-hand graph dynamics: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every dataset split into a directory.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Motion draws per configuration and elasticity in the training split.
        #[arg(long)]
        draws_per_cell: Option<usize>,
        /// Samples in each test split.
        #[arg(long)]
        test_samples: Option<usize>,
    },
    /// Train one model per seed from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        /// Checkpoint directory holding model.json and params.bin.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split: String,
        /// Dataset root; defaults to the one recorded at training time.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Report directory; defaults to `<model>/eval_<split>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Train and evaluate every model of a plan on every split of the plan.
    Ablate(PlanArgs),
    /// Repeat a plan for every value of its sweep section.
    Sweep(PlanArgs),
    /// Time single-threaded prediction for every model of a plan.
    Bench(PlanArgs),
    /// Draw cumulative-error curves from CSV files as an SVG chart.
    Plot {
        #[arg(long, required = true, num_args = 1..)]
        report: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct PlanArgs {
    /// Plan JSON; a built-in plan for the command is used when absent.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Configuration of `smgraph train`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    dataset: PathBuf,
    output: PathBuf,
    model: ModelKind,
    /// Overrides the supervision prefix of a relational model kind.
    supervision: Option<Supervision>,
    seeds: Vec<u64>,
    prediction_steps: usize,
    edge_types: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    max_samples: Option<usize>,
    settings: ModelSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let settings = ModelSettings::default();
        RunConfig {
            dataset: PathBuf::from("data"),
            output: PathBuf::from("runs/model"),
            model: ModelKind::SupNriRnn,
            supervision: None,
            seeds: vec![0],
            prediction_steps: train.prediction_steps,
            edge_types: settings.edge_types,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            max_samples: None,
            settings,
        }
    }
}

impl RunConfig {
    /// Fills derived fields so the written file describes exactly what ran.
    fn resolve(mut self) -> Result<Self> {
        if self.seeds.is_empty() {
            bail!("run config lists no seeds");
        }
        self.model = match (self.model, self.supervision) {
            (ModelKind::SupNriMlp | ModelKind::UnsNriMlp, Some(Supervision::Supervised)) => ModelKind::SupNriMlp,
            (ModelKind::SupNriMlp | ModelKind::UnsNriMlp, Some(Supervision::Unsupervised)) => ModelKind::UnsNriMlp,
            (ModelKind::SupNriRnn | ModelKind::UnsNriRnn, Some(Supervision::Supervised)) => ModelKind::SupNriRnn,
            (ModelKind::SupNriRnn | ModelKind::UnsNriRnn, Some(Supervision::Unsupervised)) => ModelKind::UnsNriRnn,
            (kind, Some(_)) => bail!("supervision applies only to relational models, not {kind}"),
            (kind, None) => kind,
        };
        self.supervision = match self.model {
            ModelKind::SupNriMlp | ModelKind::SupNriRnn => Some(Supervision::Supervised),
            ModelKind::UnsNriMlp | ModelKind::UnsNriRnn => Some(Supervision::Unsupervised),
            _ => None,
        };
        self.settings.edge_types = self.edge_types;
        Ok(self)
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            prediction_steps: self.prediction_steps,
            max_samples: self.max_samples,
            seed,
            ..TrainConfig::default()
        }
    }

    fn checkpoint_dir(&self, seed: u64) -> PathBuf {
        if self.seeds.len() == 1 {
            self.output.clone()
        } else {
            self.output.join(format!("seed_{seed}"))
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate {
            out,
            seed,
            draws_per_cell,
            test_samples,
        } => cmd_generate(&out, seed, draws_per_cell, test_samples),
        Command::Train { config } => cmd_train(&config),
        Command::Eval {
            model,
            split,
            dataset,
            out,
            horizons,
        } => cmd_eval(&model, &split, dataset, out, horizons),
        Command::Ablate(args) => cmd_plan(PlanCommand::Ablate, &args),
        Command::Sweep(args) => cmd_plan(PlanCommand::Sweep, &args),
        Command::Bench(args) => cmd_plan(PlanCommand::Bench, &args),
        Command::Plot { report, out } => cmd_plot(&report, &out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_generate(out: &Path, seed: u64, draws_per_cell: Option<usize>, test_samples: Option<usize>) -> Result<()> {
    let defaults = GenerateOptions::default();
    let opts = GenerateOptions {
        master_seed: seed,
        draws_per_cell: draws_per_cell.unwrap_or(defaults.draws_per_cell),
        test_samples: test_samples.unwrap_or(defaults.test_samples),
        ..defaults
    };
    let splits = generate_splits_with(&opts)?;
    write_dataset(out, &splits).with_context(|| format!("writing dataset to {}", out.display()))?;
    write_json(&out.join("generate.json"), &opts)?;
    for s in &splits {
        println!("{:<12} {:>5} samples", s.name.as_str(), s.samples.len());
    }
    Ok(())
}

fn cmd_train(config_path: &Path) -> Result<()> {
    let config: RunConfig = read_json(config_path)?;
    let config = config.resolve()?;
    let trainset = read_split(&config.dataset, SplitName::Trainset)
        .with_context(|| format!("loading the training split from dataset {}", config.dataset.display()))?;
    let spec = config.model.spec(&config.settings);
    for &seed in &config.seeds {
        let outcome = train(spec.clone(), &trainset.samples, &config.train_config(seed))?;
        let dir = config.checkpoint_dir(seed);
        checkpoint::save(&dir, &outcome.predictor, &outcome.losses)?;
        let last = outcome.losses.last().map_or("-".to_string(), |l| format!("{l:.6e}"));
        println!("{} seed {seed}: final loss {last} -> {}", config.model, dir.display());
    }
    write_json(&config.output.join(RUN_CONFIG_FILE), &config)
}

/// Dataset recorded by the training run that produced `model_dir`.
fn recorded_dataset(model_dir: &Path) -> Option<PathBuf> {
    [Some(model_dir), model_dir.parent()]
        .into_iter()
        .flatten()
        .map(|d| d.join(RUN_CONFIG_FILE))
        .find(|p| p.exists())
        .and_then(|p| read_json::<RunConfig>(&p).ok())
        .map(|c| c.dataset)
}

fn cmd_eval(
    model_dir: &Path,
    split: &str,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    horizons: Option<Vec<usize>>,
) -> Result<()> {
    let split: SplitName = split.parse()?;
    let (predictor, file) =
        checkpoint::load(model_dir).with_context(|| format!("loading checkpoint {}", model_dir.display()))?;
    let kind: ModelKind = file.name.parse()?;
    let dataset = dataset
        .or_else(|| recorded_dataset(model_dir))
        .unwrap_or_else(|| PathBuf::from("data"));
    let data = read_split(&dataset, split)
        .with_context(|| format!("loading split {split} from dataset {}", dataset.display()))?;
    let mut cfg = EvalConfig::default();
    if let Some(h) = horizons {
        cfg.horizons = h;
    }
    let out = out.unwrap_or_else(|| model_dir.join(format!("eval_{}", split.as_str())));
    let record = evaluate_record(&predictor, kind, &file.name, &data, 0, &cfg)?;
    if let Some(note) = &record.note {
        println!("{}: {note}", file.name);
    }
    let report = Report {
        evaluations: vec![record],
        ..Report::default()
    };
    write_report(&out, &report, &cfg.horizons)?;
    write_json(&out.join("eval_config.json"), &cfg)?;
    print_summary(&report);
    Ok(())
}

#[derive(Clone, Copy)]
enum PlanCommand {
    Ablate,
    Sweep,
    Bench,
}

impl PlanCommand {
    fn default_plan(self) -> ExperimentPlan {
        match self {
            PlanCommand::Ablate => ExperimentPlan::ablation(),
            PlanCommand::Sweep => ExperimentPlan {
                models: vec![ModelKind::SupNriRnn],
                sweep: Some(Sweep {
                    parameter: SweepParameter::PredictionSteps,
                    values: vec![5, 10, 15, 20, 25],
                }),
                ..ExperimentPlan::default()
            },
            PlanCommand::Bench => ExperimentPlan::default(),
        }
    }
}

fn cmd_plan(command: PlanCommand, args: &PlanArgs) -> Result<()> {
    let plan = match &args.plan {
        Some(path) => read_json(path)?,
        None => command.default_plan(),
    };
    let splits = read_dataset(&args.dataset)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    find_split(&splits, SplitName::Trainset)?;
    let report = match command {
        PlanCommand::Ablate => run_experiments(&plan, &splits)?,
        PlanCommand::Sweep => run_sweep(&plan, &splits)?,
        PlanCommand::Bench => run_bench(&plan, &splits)?,
    };
    write_report(&args.out, &report, &plan.eval.horizons)?;
    write_json(&args.out.join("plan.json"), &plan)?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &Report) {
    for r in &report.evaluations {
        let cells: Vec<String> = match &r.evaluation {
            Some(e) => e.horizons.iter().map(|m| format!("{}:{:.4e}", m.horizon, m.mse)).collect(),
            None => vec!["-".to_string()],
        };
        println!("{:<22} {:<12} seed {:<3} mse {}", r.label, r.split.as_str(), r.seed, cells.join(" "));
    }
    for t in &report.timings {
        println!("{:<22} {:>10.3} ms/iteration", t.model.as_str(), t.ms_per_iteration);
    }
}

fn cmd_plot(reports: &[PathBuf], out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for path in reports {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
        let name = stem.strip_prefix("curve_").unwrap_or(stem);
        series.extend(parse_curve_csv(&text, name).with_context(|| format!("parsing {}", path.display()))?);
    }
    let svg = render_svg(&series)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))
}
