//! Command-line front end.
//!
//! Exit codes: 0 converged (or nothing to converge), 2 completed but not
//! converged, 1 error. Errors go to stderr as `error[<kind>]: <message>`.

mod fit;
mod ingest;
mod output;
mod simulate;

pub use fit::{baseline_command, diagnose_command, fit_command, read_draws};
pub use ingest::{ingest, write_dataset, Dataset, IngestOptions};
pub use output::histogram;
pub use simulate::{resolve_conditions, simulate_command};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Ingest(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Sampler(String),
    #[error("{0}")]
    Diagnostics(String),
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Ingest(_) => "ingest",
            CliError::Model(_) => "model",
            CliError::Sampler(_) => "sampler",
            CliError::Diagnostics(_) => "diagnostics",
            CliError::Simulation(_) => "simulation",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "varbayes", version, about = "Latent intra-individual variability models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the variability -> outcome model.
    Fit(FitArgs),
    /// Fit the variability -> mediator -> outcome model.
    Mediate(FitArgs),
    /// Run simulation conditions (keys or `paper-grid`).
    Simulate(SimulateArgs),
    /// Fit the individual-SD regression.
    Baseline(BaselineArgs),
    /// Recompute convergence diagnostics from a draws file.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    V2y,
    V2m2y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Bayes,
    Isdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Total post-warmup iterations across all chains, before thinning.
    #[arg(long, default_value_t = 4000)]
    pub iter: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub within: PathBuf,
    #[arg(long)]
    pub between: PathBuf,
    /// Defaults to v2y for `fit` and v2m2y for `mediate`.
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// Also regress on the latent subject means.
    #[arg(long)]
    pub use_latent_mean: bool,
    /// Within-level covariate columns (comma separated); default all.
    #[arg(long, value_delimiter = ',')]
    pub within_covariates: Option<Vec<String>>,
    /// Between-level covariate columns (comma separated); default all.
    #[arg(long, value_delimiter = ',')]
    pub between_covariates: Option<Vec<String>>,
    #[arg(long, default_value = "Yalpha[1]")]
    pub focal: String,
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write draws.csv.
    #[arg(long)]
    pub draws: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Condition keys such as `a0.5_high_N250_k14`, or `paper-grid`.
    #[arg(required = true)]
    pub conditions: Vec<String>,
    #[arg(long, default_value_t = crate::simulation::DEFAULT_REPLICATIONS)]
    pub replications: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Bayes)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the per-condition chain count.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Override the per-condition warmup.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Override the per-condition total post-warmup iterations.
    #[arg(long)]
    pub iter: Option<usize>,
    /// Override the per-condition thinning interval.
    #[arg(long)]
    pub thin: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub within: PathBuf,
    #[arg(long)]
    pub between: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub between_covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// A draws.csv written by `fit --draws`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, default_value = "Yalpha[1]")]
    pub focal: String,
    /// Use split-chain PSRF.
    #[arg(long)]
    pub split: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Dispatches a parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Fit(a) => fit_command(a, DesignArg::V2y),
        Command::Mediate(a) => fit_command(a, DesignArg::V2m2y),
        Command::Simulate(a) => simulate_command(a),
        Command::Baseline(a) => baseline_command(a),
        Command::Diagnose(a) => diagnose_command(a),
    }
}

/// Parses `args` (including the program name), runs, and reports errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("error[usage]: {e}");
            return EXIT_ERROR;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            EXIT_ERROR
        }
    }
}
