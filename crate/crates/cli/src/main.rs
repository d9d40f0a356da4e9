//! `osband`: estimation, backtesting, verification and transform recovery
//! for identification functions.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "osband", version, about = "Identification functions: estimate, backtest, verify, recover transforms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Tolerance override; its meaning depends on the command.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Z-estimate a functional from a CSV sample.
    Estimate {
        #[arg(long, short)]
        functional: String,
        #[arg(long, short)]
        input: PathBuf,
    },
    /// Wald calibration test of a forecast series.
    Backtest {
        #[arg(long, short)]
        functional: String,
        /// CSV with forecast columns followed by observation columns.
        #[arg(long, short)]
        input: PathBuf,
        /// Matrix transform applied to the moments, e.g. `quantile-es:0.05`.
        #[arg(long)]
        transform: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Check that an identification function vanishes exactly at the functional.
    Verify(VerifyArgs),
    /// Recover `h(x)` with `V' = h V` over a grid.
    RecoverH(RecoverArgs),
    /// Rejection rates of the calibration test over simulated data sets.
    PowerStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Trichotomy,
    Remark1,
    Symmetric,
    EsWitness,
    VarianceWitness,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, short, required_unless_present = "check")]
    pub functional: Option<String>,
    /// `default`, `gaussian`, `scalar`, `bivariate`, `atoms`, or a JSON file.
    #[arg(long, default_value = "default")]
    pub family: String,
    /// JSON file with `offsets` and optional `points`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// `relative:c` or `distance:d`.
    #[arg(long, default_value = "relative:0.05")]
    pub exclusion: String,
    #[arg(long, default_value_t = 1e-4)]
    pub margin: f64,
    /// Monte Carlo cross-check with this many draws per law.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Run a named check instead of the family sweep.
    #[arg(long, value_enum)]
    pub check: Option<Check>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub base: String,
    #[arg(long)]
    pub prime: String,
    /// Grid axis values, comma separated; repeat once per action coordinate.
    #[arg(long = "axis", required = true, allow_hyphen_values = true)]
    pub axes: Vec<String>,
    /// JSON list of laws used at every grid point instead of the perturbation battery.
    #[arg(long)]
    pub battery: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    pub spread: f64,
    /// Also write `x1..xk,det,residual` rows here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
