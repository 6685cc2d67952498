//! Command-line front end for the periodic heat control solvers: parses
//! flags, loads the optional TOML configuration, dispatches to one command,
//! and maps failures to exit codes (0 success, 2 config error, 3 solver
//! failure, 4 failed checks).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{FileConfig, Overrides, RunConfig, ORACLE_SIZES, SOLVER_SIZES};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "periheat",
    version,
    about = "Optimal control of the time-periodic heat equation: distributed, impulse, and sampled-data solvers with convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to a TOML configuration file.
    #[arg(long, global = true, value_name = "path")]
    config: Option<PathBuf>,
    /// Output directory (default "out").
    #[arg(long, global = true, value_name = "dir")]
    out: Option<PathBuf>,
    /// Seed for the random target generator.
    #[arg(long, global = true, value_name = "u64")]
    seed: Option<u64>,
    /// Comma-separated subdivision counts for the refinement study.
    #[arg(long = "n-list", global = true, value_name = "comma list", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Number of spectral modes K.
    #[arg(long, global = true, value_name = "K")]
    modes: Option<usize>,
    /// Number of time grid cells N_t.
    #[arg(long, global = true, value_name = "N_t")]
    timesteps: Option<usize>,
    /// Suppress progress output (files are still written).
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the distributed problem; write control, state, adjoint, cost.
    Solve,
    /// Solve the impulse approximation at the configured subdivision.
    Impulse,
    /// Solve the sampled-data approximation at the configured subdivision.
    Sampled,
    /// Run the refinement study and check the fitted convergence orders.
    Converge,
    /// Run the auxiliary decay experiments and check their fitted orders.
    Lemmas,
    /// Compare all three solvers against dense factorizations at small sizes.
    Oracle,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let over = Overrides {
        out: cli.out,
        seed: cli.seed,
        n_list: cli.n_list,
        modes: cli.modes,
        timesteps: cli.timesteps,
        quiet: cli.quiet,
    };
    let sizes = match cli.command {
        Command::Oracle => &ORACLE_SIZES,
        _ => &SOLVER_SIZES,
    };
    let cfg = RunConfig::resolve(file, over, sizes)?;
    match cli.command {
        Command::Solve => commands::solve(&cfg),
        Command::Impulse => commands::impulse(&cfg),
        Command::Sampled => commands::sampled(&cfg),
        Command::Converge => commands::converge(&cfg),
        Command::Lemmas => commands::lemmas(&cfg),
        Command::Oracle => commands::oracle(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
