use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod manifest;

use error::CliError;

/// Competitive equilibria from equal incomes, their fair variants, and
/// incentive experiments.
#[derive(Debug, Parser)]
#[command(name = "ceei", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed; every random choice of the run derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Log as JSON lines.
    #[arg(long, global = true)]
    pub json_logs: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a market with CEEI, EqEEI or CEEqI.
    Solve(commands::solve::SolveArgs),
    /// Train a factorization on ratings and export a market.
    Pipeline(commands::pipeline::PipelineArgs),
    /// Group utilities and geometric mean over a grid of group-1 budgets.
    Sweep(commands::sweep::SweepArgs),
    /// Run incentive experiments from a JSON config.
    Spl(commands::spl::SplArgs),
    /// Recompute metrics for a given allocation.
    Metrics(commands::metrics::MetricsArgs),
}

fn init_logging(global: &Global) {
    let level = if global.quiet { "warn" } else { "info" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    if global.json_logs {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => commands::solve::run(&cli.global, args),
        Command::Pipeline(args) => commands::pipeline::run(&cli.global, args),
        Command::Sweep(args) => commands::sweep::run(&cli.global, args),
        Command::Spl(args) => commands::spl::run(&cli.global, args),
        Command::Metrics(args) => commands::metrics::run(&cli.global, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.global);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.name, e.message);
            ExitCode::from(e.code)
        }
    }
}
