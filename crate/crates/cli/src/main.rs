//! `qflow`: run the trajectory solver, the spectral reference and the
//! particle method from a flat config file and write CSV/JSON results.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{Config, Settings};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qflow", version, about = "Quantum evolution from fluid trajectories")]
struct Cli {
    /// Flat `key = value` config file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "qflow-out")]
    out: PathBuf,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only errors are printed.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the label trajectories and reconstruct the wavefunction.
    RunLagrangian,
    /// Split-step Fourier solve of the same initial state.
    RunReference,
    /// Discrete particle run with moving least-squares derivatives.
    RunQtm,
    /// Error norms between the final fields of two result directories.
    Compare { a: PathBuf, b: PathBuf },
    /// Seeded random checks of the deformation-gradient identities.
    TensorCheck,
    /// Free Gaussian against its closed form.
    GaussianAccept,
}

/// `QFLOW_THREADS` caps the rayon pool.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("QFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(CliError::Config(format!(
                "QFLOW_THREADS = `{raw}`: expected a positive integer"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    let settings = Settings::from_config(&config)?;
    let out = output::ensure_dir(&cli.out)?;
    let ctx = Context {
        config: &config,
        settings: &settings,
        out: &out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::RunLagrangian => commands::run_lagrangian(&ctx),
        Command::RunReference => commands::run_reference(&ctx),
        Command::RunQtm => commands::run_qtm(&ctx),
        Command::Compare { a, b } => commands::compare(&ctx, a, b),
        Command::TensorCheck => commands::tensor_check(&ctx),
        Command::GaussianAccept => commands::gaussian_accept(&ctx),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
