//! `bv`: bias-variance decompositions, ensemble curves and bootstrap
//! estimates from the command line.
//!
//! Every command prints a `# replay:` line that reruns it with all options
//! spelled out. Exit codes: 0 success, 1 counterexample failure, 2 usage or
//! parse error, 3 numerical error. `BV_THREADS` caps the worker pool.

mod commands;

use bvdual::BvError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "bv",
    version,
    about = "Bregman bias-variance decompositions in dual coordinates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose a prediction log against a label file.
    Decompose(DecomposeArgs),
    /// Bias, variance and NLL against ensemble size.
    Curve(CurveArgs),
    /// Double-bootstrap estimates on a toy world.
    Bootstrap(BootstrapArgs),
    /// Check that primal ensembling can move the bias either way.
    Counterexample(OutputArgs),
    /// Train the model grid of an experiment spec and write prediction logs.
    TrainToy(TrainToyArgs),
    /// Run an experiment spec end to end.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the machine-readable report here as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Significant digits in printed numbers.
    #[arg(long, default_value_t = 6)]
    pub precision: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    Kl,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroupByArg {
    Seed,
    #[value(name = "train_id")]
    TrainId,
    Group,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Primal,
    Dual,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainerArg {
    Toy,
    /// Uniform predictions whatever the data or seed.
    Constant,
}

#[derive(Args, Debug, Clone)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = Loss::Kl)]
    pub loss: Loss,
    /// Also report the decomposition conditioned on this tag.
    #[arg(long, value_enum)]
    pub group_by: Option<GroupByArg>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CurveArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long)]
    pub k_max: usize,
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw ensemble members with replacement (allows k beyond the pool size).
    #[arg(long)]
    pub with_replacement: bool,
    /// Write the curve as a tab-separated table.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BootstrapArgs {
    /// Bootstrap samples per level.
    #[arg(long = "B", visible_alias = "b")]
    pub b: usize,
    /// Ensemble size of each bootstrap model.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Toy world as JSON (defaults apply to missing fields).
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Toy model config as JSON (defaults apply to missing fields).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TrainerArg::Toy)]
    pub trainer: TrainerArg,
    /// Seeds for the conditional estimate.
    #[arg(long, default_value_t = 10)]
    pub n_seeds: usize,
    /// Fresh training sets for a reference value; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub truth_sets: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TrainToyArgs {
    /// Experiment spec as JSON; the built-in default spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn exit_code(e: &BvError) -> u8 {
    match e {
        BvError::Numerical { .. } | BvError::TrainingDivergence { .. } => 3,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), BvError> {
    let Ok(v) = std::env::var("BV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| BvError::usage(format!("BV_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| BvError::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("bv: {e}");
        return ExitCode::from(exit_code(&e));
    }
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(&a),
        Command::Curve(a) => commands::curve(&a),
        Command::Bootstrap(a) => commands::bootstrap(&a),
        Command::Counterexample(a) => commands::counterexample(&a),
        Command::TrainToy(a) => commands::train_toy(&a),
        Command::Experiment(a) => commands::experiment(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bv: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
