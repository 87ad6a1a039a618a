use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "mbg",
    version,
    about = "Bandit learning in strongly monotone games: experiments, equilibria and tables",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a multi-trial experiment and write per-checkpoint CSV plus a JSON summary.
    Run(RunArgs),
    /// Compute the reference Nash equilibrium and print it as JSON.
    SolveNe(SolveArgs),
    /// Regret of the single-agent learner against a quadratic adversary.
    Regret(RegretArgs),
    /// Barrier vs baseline table over the Cournot or Kelly grid.
    Table(TableArgs),
    /// Print size and label balance of a LIBSVM dataset.
    InspectData(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Cournot,
    Kelly,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Barrier,
    Fkm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Tuned,
    Theory,
    TheoryNoisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridFamily {
    Cournot,
    Kelly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdversaryKind {
    Uniform,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegretStep {
    FixedHorizon,
    Anytime,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// key=value file whose entries act as flags; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for learner randomness.
    #[arg(long, env = "MBG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Threads used to run trials in parallel.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long, value_enum)]
    pub game: Family,
    /// Number of players (Cournot, Kelly).
    #[arg(long = "N", default_value_t = 10)]
    pub n: usize,
    /// Demand intercept (Cournot).
    #[arg(long, default_value_t = 10.0)]
    pub a: f64,
    /// Demand slope (Cournot).
    #[arg(long, default_value_t = 0.05)]
    pub b: f64,
    /// Explicit marginal costs; overrides the random draw and sets N.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    /// Explicit capacities (default 1 each).
    #[arg(long, value_delimiter = ',')]
    pub capacities: Option<Vec<f64>>,
    /// Number of resources (Kelly).
    #[arg(long = "S", default_value_t = 2)]
    pub s: usize,
    /// Upper end of the entry-bid distribution (Kelly).
    #[arg(long, default_value_t = 0.5)]
    pub dbar: f64,
    /// Explicit player gains (Kelly); needs --quantities and --entry.
    #[arg(long, value_delimiter = ',')]
    pub gains: Option<Vec<f64>>,
    /// Explicit resource quantities (Kelly).
    #[arg(long, value_delimiter = ',')]
    pub quantities: Option<Vec<f64>>,
    /// Explicit entry bids (Kelly).
    #[arg(long, value_delimiter = ',')]
    pub entry: Option<Vec<f64>>,
    /// Explicit budgets (Kelly, default 1 each).
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
    /// LIBSVM file, or `synthetic:MxN[:seed]` (logistic).
    #[arg(long)]
    pub data: Option<String>,
    /// Feature dimension of the LIBSVM file; inferred when absent.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Regularization weight (logistic).
    #[arg(long, default_value_t = 0.001)]
    pub mu: f64,
    /// Seed for drawing random instances; defaults to --seed.
    #[arg(long)]
    pub instance_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Horizon.
    #[arg(long = "T", default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Step-size schedule of the barrier learner.
    #[arg(long, value_enum, default_value_t = Schedule::Tuned)]
    pub schedule: Schedule,
    /// Half-width of uniform payoff noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// CSV output; the JSON summary goes next to it with a .json extension.
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Stopping tolerance of the solver.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RegretArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Curvature of the quadratic payoffs.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = AdversaryKind::Uniform)]
    pub adversary: AdversaryKind,
    /// Range of the uniform adversary's targets.
    #[arg(long, default_value_t = 0.0)]
    pub low: f64,
    #[arg(long, default_value_t = 1.0)]
    pub high: f64,
    /// Target of the constant adversary.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub horizons: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = RegretStep::FixedHorizon)]
    pub step: RegretStep,
    /// Optional CSV of per-trial regret.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, value_enum)]
    pub family: GridFamily,
    #[arg(long = "T", default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Only rows with at most this many players.
    #[arg(long = "max-N", default_value_t = 100)]
    pub max_n: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed for drawing the instances; defaults to --seed.
    #[arg(long)]
    pub instance_seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// LIBSVM file, or `synthetic:MxN[:seed]`.
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}
