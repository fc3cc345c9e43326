//! `actsearch`: search for activation functions, train and inspect them.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Run(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "actsearch",
    version,
    about = "Search for activation functions and analyse them"
)]
pub struct Cli {
    /// Suppress progress output on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an evolutionary search and rerank its best functions.
    Search(SearchArgs),
    /// Coordinate an asynchronous search over TCP workers.
    Serve(SearchArgs),
    /// Evaluate candidates handed out by a coordinator.
    Work(WorkArgs),
    /// Print a function's value and gradients at some points.
    EvalFn(EvalFnArgs),
    /// Train a network with one function and save its curves.
    TrainFn(TrainFnArgs),
    /// Evaluate functions under several training setups.
    CrossEval(CrossEvalArgs),
    /// Count the functions in the search space.
    SpaceCount(SpaceCountArgs),
    /// List or evaluate the reference activation functions.
    Baselines(BaselinesArgs),
    /// Build a graph for a piecewise function.
    CompilePiecewise(PiecewiseArgs),
    /// Build an interval or point indicator graph.
    Indicator(IndicatorArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sequential,
    Asynchronous,
    RandomSearch,
}

#[derive(Args, Debug, Default)]
pub struct SearchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Candidates never carry parameters.
    #[arg(long)]
    pub no_params: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Listen address in asynchronous mode.
    #[arg(long)]
    pub bind: Option<String>,
    /// Worker threads started in this process in asynchronous mode.
    #[arg(long)]
    pub local_workers: Option<usize>,
    /// Skip re-evaluating the best functions on the full schedule.
    #[arg(long)]
    pub no_rerank: bool,
}

#[derive(Args, Debug)]
pub struct WorkArgs {
    /// Coordinator address, overriding `distrib.coordinator`.
    #[arg(long)]
    pub coordinator: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalFnArgs {
    pub expr: String,
    #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
    pub at: Vec<f64>,
    /// Parameter values; all 1 when omitted.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub params: Vec<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    PerLayer,
    PerChannel,
    PerNeuron,
}

#[derive(Args, Debug)]
pub struct TrainFnArgs {
    /// Function in the text grammar; omit when using `--baseline`.
    pub expr: Option<String>,
    #[arg(long, conflicts_with = "expr")]
    pub baseline: Option<String>,
    /// Wrap the function as `alpha * f(beta * x)` with learnable scales.
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the schedule compressed by two, as during search.
    #[arg(long)]
    pub compressed: bool,
    #[arg(long, value_enum)]
    pub granularity: Option<GranularityArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CrossEvalArgs {
    /// Functions to evaluate, added to `cross.exprs`.
    pub exprs: Vec<String>,
    /// Also evaluate the functions listed in a search report.
    #[arg(long)]
    pub from_report: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpaceCountArgs {
    /// JSON array of `{"b", "u", "arrangements"}` rows.
    #[arg(long)]
    pub arrangements: Option<PathBuf>,
    /// Count every subset of edges instead of at most `max_params`.
    #[arg(long)]
    pub uncapped: bool,
    #[arg(long, default_value_t = 7)]
    pub max_nodes: u32,
    #[arg(long)]
    pub unary_ops: Option<u64>,
    #[arg(long)]
    pub binary_ops: Option<u64>,
    #[arg(long)]
    pub max_params: Option<u64>,
    #[arg(long)]
    pub json: bool,
    /// Print the skeletons with B binary and U unary nodes instead.
    #[arg(long, num_args = 2, value_names = ["B", "U"])]
    pub shapes: Option<Vec<u32>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselinesArgs {
    /// Names to show; all when omitted.
    pub names: Vec<String>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub at: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct PiecewiseArgs {
    /// JSON or TOML file with `breakpoints`, `values` and `pieces`.
    pub spec: PathBuf,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub at: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct IndicatorArgs {
    /// left, right, open_interval or point.
    pub kind: String,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub at: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("actsearch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
