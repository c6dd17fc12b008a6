//! `stein-prelimit`: command-line front end for the library experiments.
//!
//! Exit status is 0 when every embedded check passes, 1 on a failed check
//! or numerical error, 2 on a usage error.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;
use io::{emit, read_config, usage, Outcome};

#[derive(Parser)]
#[command(
    name = "stein-prelimit",
    version,
    about = "Prelimit Stein's method experiments for birth-death chains"
)]
struct Cli {
    /// JSON object whose keys mirror the subcommand flags. Flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the degree-7 interpolant and its derivatives.
    Interp(InterpArgs),
    /// W₁ gap between the queue and its diffusion limit along a ρ sweep.
    Convergence(ConvergenceArgs),
    /// Synchronous-coupling Monte Carlo for τ or Δᵃf_h.
    Couple(CoupleArgs),
    /// Stein-factor bounds for sampled test functions.
    Stein(SteinArgs),
    /// Check the generator interchange identity at one point.
    InterchangeCheck(InterchangeArgs),
    /// Solve the Poisson equation on a truncated box.
    Poisson(PoissonArgs),
    /// Misalignment window for four reflected Brownian motions.
    Misalign(MisalignArgs),
}

/// Caps rayon's pool from `STEIN_PRELIMIT_THREADS`.
fn configure_threads() -> Outcome<()> {
    let Ok(v) = std::env::var("STEIN_PRELIMIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("STEIN_PRELIMIT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(e.to_string()))
}

fn run(cli: Cli) -> Outcome<()> {
    configure_threads()?;
    let file = cli.config.as_ref().map(read_config).transpose()?;
    let file = file.as_ref();
    let out = match cli.cmd {
        Command::Interp(a) => interp(a, file)?,
        Command::Convergence(a) => convergence(a, file)?,
        Command::Couple(a) => couple(a, file)?,
        Command::Stein(a) => stein(a, file)?,
        Command::InterchangeCheck(a) => interchange_check(a, file)?,
        Command::Poisson(a) => poisson(a, file)?,
        Command::Misalign(a) => misalign(a, file)?,
    };
    emit(cli.output.as_ref(), &out.body)?;
    out.verdict
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
