//! `coxint`: estimate, test and simulate covariate-driven Cox intensities.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "coxint", version, about = "Nonparametric Cox process intensity estimation")]
struct Cli {
    /// Worker threads for estimation and Monte-Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate q on an interval with data-driven bandwidth selection.
    Estimate(EstimateArgs),
    /// Test a parametric family for q.
    Test(TestArgs),
    /// Simulate a temperature path, Cox events and optional spike prices.
    Simulate(SimulateArgs),
    /// Detect spikes in a price series.
    Detect(DetectArgs),
    /// Run the Monte-Carlo study and write a summary table.
    Mc(McArgs),
    /// Print kernel norms, moment matrix and test constants.
    Info(InfoArgs),
}

/// Inputs and estimator settings shared by `estimate` and `test`.
#[derive(Args, Debug, Clone)]
pub struct EstimationArgs {
    /// Covariate path CSV (`t,x`).
    #[arg(long)]
    pub path: PathBuf,
    /// Event times CSV (`t`).
    #[arg(long)]
    pub events: PathBuf,
    /// JSON file with defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Estimation interval `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub interval: Option<String>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Intensity scale n.
    #[arg(long)]
    pub n: Option<u64>,
    /// `arithmetic:<step>[:<h_max>]` or `divisor`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Count in the bandwidth floor `|I|‖K‖₁‖K‖∞/count` (default: events in I).
    #[arg(long)]
    pub hmin_count: Option<f64>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Divide all input times by this many hours.
    #[arg(long)]
    pub time_unit: Option<f64>,
    /// Report max(q̂, floor) in the curve output.
    #[arg(long)]
    pub clip_floor: Option<f64>,
    /// Warn when the achieved observability ν falls below this value.
    #[arg(long)]
    pub min_nu: Option<f64>,
    /// Observation horizon in input time units (default: last path time).
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: EstimationArgs,
    /// Output directory for curve.csv, selection.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: EstimationArgs,
    /// `exp`, `const` or `plugin`.
    #[arg(long, default_value = "exp")]
    pub family: String,
    /// JSON description of a plugin family.
    #[arg(long)]
    pub plugin: Option<PathBuf>,
    /// `from-estimate` or a bandwidth value.
    #[arg(long, default_value = "from-estimate")]
    pub h: String,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    /// Lag range of the test constant: `support` or `full`.
    #[arg(long, default_value = "support")]
    pub lags: String,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Price CSV (`t,x`, hourly time).
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub order: usize,
    #[arg(long, default_value_t = 5.0)]
    pub mult: f64,
    #[arg(long, default_value_t = 0.49)]
    pub exponent: f64,
    #[arg(long, default_value_t = 8760.0)]
    pub segment_hours: f64,
    /// Do not flag the increment right after a flagged one.
    #[arg(long)]
    pub suppress_reversals: bool,
    /// Events CSV destination (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct McArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Summary table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-replication CSV.
    #[arg(long)]
    pub details: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: String,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Lag range of the test constant: `support` or `full`.
    #[arg(long, default_value = "support")]
    pub lags: String,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Test(a) => commands::test(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Detect(a) => commands::detect(a),
        Command::Mc(a) => commands::mc(a),
        Command::Info(a) => commands::info(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
