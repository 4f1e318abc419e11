use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const BUILD_ID: &str = concat!("fracbd ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser, Serialize)]
#[command(name = "fracbd", version = env!("CARGO_PKG_VERSION"), about = "Time-fractional birth-death processes")]
pub struct Cli {
    /// Optional `key = value` file; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Size of the worker pool. Affects wall time only.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit a flat JSON object instead of CSV.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Evaluate E_α(x), or E_α(-θ t^α) with --theta and --t.
    MlEval(MlEvalArgs),
    /// Draw one-sided stable variates (diagnostic).
    SampleStable(SampleStableArgs),
    /// Monte Carlo marginals of the fractional chain.
    Simulate(SimulateArgs),
    /// Spectral transition probabilities p_ij(t).
    Transition(TransitionArgs),
    /// Spectral survival probabilities P_i[T_0 > t].
    Survival(SurvivalArgs),
    /// Quasi-limiting distribution coefficients.
    Qld(QldArgs),
    /// Quasi-stationary distribution for a given θ or a θ scan.
    Qsd(QsdArgs),
    /// Closed forms for the linear process.
    Linear(LinearArgs),
    /// Run the embedded invariant suite.
    Selfcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MlEval(_) => "ml-eval",
            Command::SampleStable(_) => "sample-stable",
            Command::Simulate(_) => "simulate",
            Command::Transition(_) => "transition",
            Command::Survival(_) => "survival",
            Command::Qld(_) => "qld",
            Command::Qsd(_) => "qsd",
            Command::Linear(_) => "linear",
            Command::Selfcheck => "selfcheck",
        }
    }
}

pub const SUBCOMMANDS: [&str; 9] =
    ["ml-eval", "sample-stable", "simulate", "transition", "survival", "qld", "qsd", "linear", "selfcheck"];

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    /// Linear birth rate λ (λ_i = iλ).
    #[arg(long, requires = "mu", conflicts_with = "rates_file", allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Linear death rate μ (μ_i = iμ).
    #[arg(long, requires = "lambda", allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// CSV rate table with header `i,birth,death`.
    #[arg(long)]
    pub rates_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Reflect,
    Absorb,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Renewal,
    Timechange,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearWhat {
    Survival,
    P1j,
    Qld,
    Tail,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("point").required(true).args(["x", "theta"]))]
pub struct MlEvalArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["theta", "t"])]
    pub x: Option<f64>,
    #[arg(long, requires = "t", allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, requires = "theta")]
    pub t: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleStableArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub i0: usize,
    /// Observation time; repeat for several.
    #[arg(long = "t", required = true)]
    pub t: Vec<f64>,
    #[arg(long)]
    pub n_paths: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TransitionArgs {
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub i: usize,
    /// Target state; repeat for several.
    #[arg(long = "j", required = true)]
    pub j: Vec<usize>,
    #[arg(long = "t", required = true)]
    pub t: Vec<f64>,
    /// Truncation level.
    #[arg(long = "M", default_value_t = 200)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = Boundary::Reflect)]
    pub boundary: Boundary,
}

#[derive(Debug, Args, Serialize)]
pub struct SurvivalArgs {
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub i: usize,
    #[arg(long = "t", required = true)]
    pub t: Vec<f64>,
    #[arg(long = "M", default_value_t = 200)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = Boundary::Reflect)]
    pub boundary: Boundary,
}

#[derive(Debug, Args, Serialize)]
pub struct QldArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub i0: usize,
    #[arg(long)]
    pub nmax: usize,
    /// Only used by the spectral check.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Compare with the spectral conditional law at this time.
    #[arg(long)]
    pub check_t: Option<f64>,
    /// Truncation level of the spectral check.
    #[arg(long = "M", default_value_t = 200)]
    pub m: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("which").required(true).args(["theta", "theta_scan"]))]
pub struct QsdArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub theta: Option<f64>,
    /// `lo:hi:steps`, inclusive on both ends.
    #[arg(long)]
    pub theta_scan: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub nmax: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct LinearArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long = "t")]
    pub t: Vec<f64>,
    #[arg(long, value_enum)]
    pub what: LinearWhat,
    /// Target states for `p1j`.
    #[arg(long = "j")]
    pub j: Vec<usize>,
    /// Start state for `qld`.
    #[arg(long, default_value_t = 1)]
    pub i0: usize,
    #[arg(long, default_value_t = 50)]
    pub nmax: usize,
}
