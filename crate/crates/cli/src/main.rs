//! `ergm-sbi`: simulate, train, sample, evaluate and compare from one config file.

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Mode};

#[derive(Parser)]
#[command(name = "ergm-sbi", version, about = "Simulation-based inference for ERGMs")]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set sim.n=20`. Repeatable; later wins.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation and replicate fan-out (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (θ, x) pairs into a training-set CSV.
    Simulate,
    /// Fit the flow and write a checkpoint.
    Train {
        #[arg(long, value_enum, default_value = "npe")]
        mode: Mode,
    },
    /// Draw posterior samples at `x_obs` from a checkpoint.
    Sample,
    /// Bias evaluation over stratified truths.
    Evaluate,
    /// Paired NPE vs exchange comparison at one truth.
    Compare,
    /// Run one exchange-algorithm chain at `x_obs`.
    Exchange,
    /// Enumeration oracle checks for n <= 5.
    Selftest,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    if let Command::Selftest = cli.command {
        return selftest::run();
    }
    let cfg = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Train { mode } => commands::train(&cfg, mode),
        Command::Sample => commands::sample(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Exchange => commands::exchange(&cfg),
        Command::Selftest => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ergm-sbi: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
