//! qvlab command-line front end.
//!
//! Exit codes: 0 success, 1 validation error, 2 acceptance failure.
//! `QVLAB_THREADS` hints the worker-pool size; results never depend on it.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    AcceptanceFailure(String),
}

impl From<qvlab_core::engine::EngineError> for CliError {
    fn from(e: qvlab_core::engine::EngineError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<qvlab_core::surfaces::SurfaceError> for CliError {
    fn from(e: qvlab_core::surfaces::SurfaceError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<qvlab_core::quadvar::QvError> for CliError {
    fn from(e: qvlab_core::quadvar::QvError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<qvlab_core::pricing::PricingError> for CliError {
    fn from(e: qvlab_core::pricing::PricingError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<qvlab_core::covmodel::CovError> for CliError {
    fn from(e: qvlab_core::covmodel::CovError) -> Self {
        CliError::Validation(e.to_string())
    }
}
impl From<qvlab_core::forecast::ForecastError> for CliError {
    fn from(e: qvlab_core::forecast::ForecastError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "qvlab",
    about = "Simulation, quadratic-variation estimation, pricing, and forecasting \
             for local-volatility models with known long-run variance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate price paths and export them as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Realized quadratic variation over configured windows, optionally
    /// from an ingested `t,price` CSV, optionally with a bound fit.
    Qv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Fit (alpha, theta, gamma) from the windows.
        #[arg(long)]
        fit: bool,
        /// Price series to analyze instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo option prices plus parity and martingale audits.
    Price {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Implied-volatility surface from one common-random-number ensemble.
    Ivsurface {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Empirical covariance of centered log returns and (alpha, beta) fit.
    Cov {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Conditional Gaussian forecast (limit or corrected variant).
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Mean-variance present value of a portfolio under the forecast.
    Pv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a verification suite and write its JSON report.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run() -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("QVLAB_THREADS") {
        let n: usize = threads.parse().map_err(|_| {
            CliError::Validation(format!("QVLAB_THREADS must be an integer, got `{threads}`"))
        })?;
        // worker hint only; building the pool twice is not an error
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out } => {
            commands::cmd_simulate(&Config::from_file(&config)?, &out)
        }
        Command::Qv {
            config,
            out,
            fit,
            input,
        } => commands::cmd_qv(&Config::from_file(&config)?, &out, fit, input.as_deref()),
        Command::Price { config, out } => commands::cmd_price(&Config::from_file(&config)?, &out),
        Command::Ivsurface { config, out } => {
            commands::cmd_ivsurface(&Config::from_file(&config)?, &out)
        }
        Command::Cov { config, out } => commands::cmd_cov(&Config::from_file(&config)?, &out),
        Command::Forecast { config, out } => {
            commands::cmd_forecast(&Config::from_file(&config)?, &out)
        }
        Command::Pv { config, out } => commands::cmd_pv(&Config::from_file(&config)?, &out),
        Command::Verify { suite, config, out } => {
            let cfg = match config {
                Some(path) => Some(Config::from_file(&path)?),
                None => None,
            };
            commands::cmd_verify(&suite, cfg.as_ref(), &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::AcceptanceFailure(msg)) => {
            eprintln!("acceptance failure: {msg}");
            ExitCode::from(2)
        }
    }
}
