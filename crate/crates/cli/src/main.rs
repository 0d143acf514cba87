mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Implicit-scheme solver and verification suite for nonlinear Fokker-Planck equations.
#[derive(Debug, Parser)]
#[command(name = "fpk", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Top-level seed; overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the structural hypotheses; exit 1 on any violation.
    CheckHypotheses,
    /// Run the implicit scheme and write snapshots and diagnostics.
    Solve,
    /// Run the configured invariant checks; exit 1 if any fails.
    Verify,
    /// Simulate the particle system and compare with the PDE.
    Particles,
    /// Time the building blocks of the configured run.
    Bench,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("FPK_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Config(format!("FPK_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<bool> {
    init_threads()?;
    let path = cli.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let ctx = Context::new(RunConfig::load(&path)?, cli.out, cli.seed, cli.quiet)?;
    match cli.command {
        Command::CheckHypotheses => commands::cmd_check_hypotheses(&ctx),
        Command::Solve => commands::cmd_solve(&ctx).map(|_| true),
        Command::Verify => commands::cmd_verify(&ctx),
        Command::Particles => commands::cmd_particles(&ctx).map(|_| true),
        Command::Bench => commands::cmd_bench(&ctx).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
