//! `genmarket` command-line entry point.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "genmarket",
    version,
    about = "Gaussian conditional-law models of an OU log-price market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory. Defaults to the scenario's `output_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Euler–Maruyama terminal states next to the exact marginal law.
    Simulate(commands::SimulateArgs),
    /// Train a network on the scenario's exact marginal laws.
    Fit(commands::FitArgs),
    /// Grid W2 error of a checkpoint and the induced price-law bound.
    Eval(commands::EvalArgs),
    /// Monte Carlo price of the scenario payoff with a certified bias bound.
    Price(commands::PriceArgs),
    /// Mean-variance portfolio from a model query or explicit moments.
    Portfolio(commands::PortfolioArgs),
}

fn configure_threads() -> Result<(), error::CliError> {
    let Ok(raw) = std::env::var("GENMARKET_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            error::CliError::Usage(format!("GENMARKET_THREADS must be a positive integer, got `{raw}`"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| error::CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Price(a) => commands::price(a),
        Command::Portfolio(a) => commands::portfolio(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
