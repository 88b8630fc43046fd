//! `privkde`: release, aggregate, select and audit private kernel density
//! estimates from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "privkde",
    version,
    about = "Locally private kernel density estimation",
    args_override_self = true
)]
struct Cli {
    /// Flat key=value file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Release one noisy kernel curve per observation and bandwidth.
    Release(ReleaseArgs),
    /// Average released curves into the estimate f̂_h.
    Estimate(EstimateArgs),
    /// Pick a bandwidth from released curves with the Lepski rule.
    Adapt(AdaptArgs),
    /// Monte Carlo MSE over a sweep of sample sizes.
    Simulate(SimulateArgs),
    /// Empirical privacy check on a neighbouring pair of inputs.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct Budget {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ReleaseArgs {
    /// Observations, one real number per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "sinc")]
    kernel: String,
    #[arg(long, default_value = "laplace")]
    mechanism: String,
    #[command(flatten)]
    budget: Budget,
    /// Fixed bandwidths, comma separated.
    #[arg(long, conflicts_with_all = ["grid_a", "h_max"])]
    h: Option<String>,
    /// Ratio of the geometric bandwidth grid.
    #[arg(long, requires = "h_max")]
    grid_a: Option<f64>,
    /// Largest bandwidth of the geometric grid.
    #[arg(long, requires = "grid_a")]
    h_max: Option<f64>,
    /// Curve grid: `lo:hi:count` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    points: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Curve CSV; metadata goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct EstimateArgs {
    /// Curve CSV written by `release`.
    #[arg(long)]
    data: PathBuf,
    /// Metadata JSON (default: next to the data file).
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    h: f64,
    /// A single grid point; the whole curve when absent.
    #[arg(long)]
    t: Option<f64>,
    /// Replace negative estimates by zero.
    #[arg(long)]
    clip_zero: bool,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AdaptArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    t: f64,
    /// Upper bound M on the density.
    #[arg(long)]
    m_bound: f64,
    #[arg(long, default_value_t = 2.0, conflicts_with = "kappa_theory")]
    kappa: f64,
    /// Use the conservative κ needed by the risk bound.
    #[arg(long)]
    kappa_theory: bool,
    /// Grid ratio (default: from the release metadata).
    #[arg(long)]
    grid_a: Option<f64>,
    /// Largest bandwidth (default: from the release metadata).
    #[arg(long)]
    h_max: Option<f64>,
    /// Selection trace JSON (default: `<data>.trace.json`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long, default_value = "gaussian_std")]
    density: String,
    #[arg(long, default_value = "sinc")]
    kernel: String,
    #[arg(long, default_value = "laplace")]
    mechanism: String,
    #[command(flatten)]
    budget: Budget,
    /// `fixed:H`, `rate:P` (h = n^-P), `oracle` or `adaptive`.
    #[arg(long)]
    rule: String,
    /// Sample sizes, comma separated.
    #[arg(long)]
    ns: String,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Non-private baseline.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 2.0)]
    grid_a: f64,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    /// Density bound M (default: sup of the true density).
    #[arg(long)]
    m_bound: Option<f64>,
    /// Report CSV; the JSON summary goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AuditArgs {
    #[arg(long, default_value = "laplace")]
    mechanism: String,
    #[arg(long, default_value = "sinc")]
    kernel: String,
    #[arg(long)]
    h: f64,
    #[command(flatten)]
    budget: Budget,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplies the calibrated noise; below 1 is a negative control.
    #[arg(long, default_value_t = 1.0)]
    scale_factor: f64,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    x_prime: Option<f64>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run() -> CliResult<()> {
    let args = config::expand(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::config(first.trim_start_matches("error: ")));
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    match cli.command {
        Command::Release(a) => commands::release(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Audit(a) => commands::audit(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
