//! `preflab` — the laboratory's command line: generate worlds and datasets,
//! fit reward models, report metrics, and run the verification sweeps.
//!
//! Exit codes: 0 on success, 2 when a sweep finishes but one of its
//! assertions fails, 1 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use preflab_core::experiments::ExperimentConfig;
use preflab_core::{
    annotate_rewards, build_world, compute_report, generate_dataset, jsonio, train, AnnotateMode,
    ModelKind, PrefError, PreferenceDataset, Result, RewardModel, TrainConfig, World, WorldConfig,
};

const EXIT_ASSERTION_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "preflab", version, about = "Desk-scale preference-alignment laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthetic worlds with known ground-truth rewards.
    #[command(subcommand)]
    World(WorldCmd),
    /// Preference datasets sampled from a world.
    #[command(subcommand)]
    Data(DataCmd),
    /// Fit a reward model on an annotated dataset.
    Train(CommonArgs),
    /// Metric report for a trained model on a dataset.
    Eval(CommonArgs),
    /// Verification sweeps; artifacts land under --out and reruns resume.
    Sweep {
        which: SweepName,
        #[command(flatten)]
        args: CommonArgs,
    },
}

#[derive(Subcommand)]
enum WorldCmd {
    /// Build a world and write `world.json`.
    Gen(CommonArgs),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Sample rankings from a world and write `dataset.json`.
    Gen(CommonArgs),
    /// Fill in hardness estimates and write `dataset.json`.
    Annotate(CommonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepName {
    Complexity,
    Gamma,
    Margin,
    Efficiency,
    Compare,
}

impl SweepName {
    fn key(self) -> &'static str {
        match self {
            SweepName::Complexity => "complexity",
            SweepName::Gamma => "gamma",
            SweepName::Margin => "margin",
            SweepName::Efficiency => "efficiency",
            SweepName::Compare => "compare",
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file (schemas in the README).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Seed override; for sweeps it shifts every configured seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Directory for output artifacts.
    #[arg(long)]
    out: PathBuf,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Stdout rendering for `eval`.
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

impl CommonArgs {
    fn config_path(&self) -> Result<&Path> {
        self.config
            .as_deref()
            .ok_or_else(|| PrefError::InvalidConfig("--config is required for this command".into()))
    }
}

/// `data gen` config.
#[derive(Serialize, Deserialize)]
struct DataGenPlan {
    /// Path to `world.json`, relative to this config file.
    world: PathBuf,
    samples: usize,
    ranking_len: usize,
    #[serde(default)]
    seed: u64,
}

/// `data annotate` config.
#[derive(Serialize, Deserialize)]
struct AnnotatePlan {
    world: PathBuf,
    dataset: PathBuf,
    #[serde(flatten)]
    mode: AnnotateMode,
    #[serde(default)]
    seed: u64,
}

/// `train` config.
#[derive(Serialize, Deserialize)]
struct TrainPlan {
    world: PathBuf,
    dataset: PathBuf,
    model: ModelKind,
    #[serde(default = "default_beta")]
    beta: f64,
    train: TrainConfig,
}

fn default_beta() -> f64 {
    1.0
}

/// `eval` config.
#[derive(Serialize, Deserialize)]
struct EvalPlan {
    world: PathBuf,
    dataset: PathBuf,
    /// Path to `model.json` from a training run.
    model: PathBuf,
}

/// [`jsonio::read_json`] with the offending path worked into the error.
fn read_json_at<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    jsonio::read_json(path).map_err(|e| match e {
        PrefError::Io(io) => {
            PrefError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())))
        }
        PrefError::Json(json) => PrefError::InvalidConfig(format!("{}: {json}", path.display())),
        other => other,
    })
}

/// Paths inside config files resolve relative to the config file itself.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_base(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn world_gen(args: &CommonArgs) -> Result<u8> {
    let cfg: WorldConfig = match &args.config {
        Some(p) => read_json_at(p)?,
        None => WorldConfig::new(4, 8, 4, 1.0),
    };
    let world = build_world(&cfg, args.seed.unwrap_or(0))?;
    std::fs::create_dir_all(&args.out)?;
    jsonio::write_json(&args.out.join("world.json"), &world)?;
    println!(
        "world: {} prompts x {} responses, feature dim {}, hash {}",
        cfg.prompt_count,
        cfg.responses_per_prompt,
        cfg.feature_dim,
        world.config_hash()
    );
    Ok(0)
}

fn data_gen(args: &CommonArgs) -> Result<u8> {
    let path = args.config_path()?;
    let plan: DataGenPlan = read_json_at(path)?;
    let base = config_base(path);
    let world: World = read_json_at(&resolve(base, &plan.world))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.unwrap_or(plan.seed));
    let dataset = generate_dataset(&world, plan.samples, plan.ranking_len, &mut rng)?;
    std::fs::create_dir_all(&args.out)?;
    jsonio::write_json(&args.out.join("dataset.json"), &dataset)?;
    println!("dataset: {} rankings of length {}", dataset.len(), dataset.n);
    Ok(0)
}

fn data_annotate(args: &CommonArgs) -> Result<u8> {
    let path = args.config_path()?;
    let plan: AnnotatePlan = read_json_at(path)?;
    let base = config_base(path);
    let world: World = read_json_at(&resolve(base, &plan.world))?;
    let mut dataset: PreferenceDataset = read_json_at(&resolve(base, &plan.dataset))?;
    annotate_rewards(&mut dataset, &world, plan.mode, args.seed.unwrap_or(plan.seed))?;
    std::fs::create_dir_all(&args.out)?;
    jsonio::write_json(&args.out.join("dataset.json"), &dataset)?;
    println!("annotated {} rankings", dataset.len());
    Ok(0)
}

fn run_train(args: &CommonArgs) -> Result<u8> {
    let path = args.config_path()?;
    let plan: TrainPlan = read_json_at(path)?;
    let base = config_base(path);
    let world: World = read_json_at(&resolve(base, &plan.world))?;
    let dataset: PreferenceDataset = read_json_at(&resolve(base, &plan.dataset))?;
    let mut cfg = plan.train.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let init = RewardModel::zeroed(plan.model, &world, plan.beta)?;
    let record = train(&dataset, &world, &init, &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    record.write_trace_tsv(&args.out.join("trace.tsv"))?;
    jsonio::write_json(&args.out.join("model.json"), &record.final_params)?;
    jsonio::write_json(&args.out.join("run.json"), &record)?;
    println!(
        "trained {} for {} steps: final loss {:.6}, {} reward evals, {:.1} ms",
        cfg.loss.name(),
        record.steps,
        record.loss_trace.last().copied().unwrap_or(f64::NAN),
        record.reward_eval_count,
        record.wall_time_ms
    );
    Ok(0)
}

fn run_eval(args: &CommonArgs) -> Result<u8> {
    let path = args.config_path()?;
    let plan: EvalPlan = read_json_at(path)?;
    let base = config_base(path);
    let world: World = read_json_at(&resolve(base, &plan.world))?;
    let dataset: PreferenceDataset = read_json_at(&resolve(base, &plan.dataset))?;
    let model: RewardModel = read_json_at(&resolve(base, &plan.model))?;
    let report = compute_report(&model, &world, &dataset)?;
    std::fs::create_dir_all(&args.out)?;
    jsonio::write_json(&args.out.join("metrics.json"), &report)?;
    report.write_per_sample_tsv(&args.out.join("per_sample.tsv"))?;
    match args.format {
        Format::Tsv => print!("{}", report.render_text()),
        Format::Json => println!("{}", jsonio::to_json_string(&report)?),
    }
    Ok(0)
}

fn run_sweep(which: SweepName, args: &CommonArgs) -> Result<u8> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| PrefError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let expected = ExperimentConfig::default_for(which.key()).expect("known sweep name");
    let mut cfg = match &args.config {
        Some(p) => {
            let cfg: ExperimentConfig = read_json_at(p)?;
            if cfg.name() != expected.name() {
                return Err(PrefError::InvalidConfig(format!(
                    "config file is for '{}' but the subcommand asked for '{}'",
                    cfg.name(),
                    expected.name()
                )));
            }
            cfg
        }
        None => expected,
    };
    if let Some(seed) = args.seed {
        cfg.reseed(seed);
    }
    let all_passed = cfg.run(&args.out)?;
    Ok(if all_passed { 0 } else { EXIT_ASSERTION_FAILURE })
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::World(WorldCmd::Gen(args)) => world_gen(args),
        Cmd::Data(DataCmd::Gen(args)) => data_gen(args),
        Cmd::Data(DataCmd::Annotate(args)) => data_annotate(args),
        Cmd::Train(args) => run_train(args),
        Cmd::Eval(args) => run_eval(args),
        Cmd::Sweep { which, args } => run_sweep(*which, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
