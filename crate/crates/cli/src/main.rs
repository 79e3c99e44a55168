//! `feasolve`: scenario-driven front end for the cyclic relaxed
//! Douglas-Rachford solver.
//!
//! Subcommands: `run`, `sweep`, `verify`, `budget`.  Exit codes: 0 on
//! convergence (or all checks passing), 1 on malformed input or range
//! violations, 2 when the iteration budget runs out, 3 on divergence.
//! `FEAS_LOG` (`quiet`, `info`, `debug`) controls stderr verbosity.

mod commands;
mod scenario;
mod summary;

use clap::{Parser, Subcommand};
use commands::{Overrides, EXIT_INVALID};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "feasolve",
    version,
    about = "Cyclic relaxed Douglas-Rachford feasibility solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory to place output files in (overrides scenario paths).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Seed override for "random" starting points.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Iteration budget override.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario at its lambda; write trace CSV and summary JSON.
    Run { scenario: PathBuf },
    /// Run a scenario over its lambda list; one summary record per value.
    Sweep { scenario: PathBuf },
    /// Run, then check the fixed-point and shadow invariants; print a report.
    Verify { scenario: PathBuf },
    /// Evaluate the regularity budget chain from a parameter file.
    Budget { params: PathBuf },
}

fn init_logging() {
    let level = match std::env::var("FEAS_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") | Err(_) => log::LevelFilter::Info,
        Ok(other) => {
            eprintln!("feasolve: unknown FEAS_LOG value `{other}`, using `info`");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn main() {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems share the malformed-input exit code.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    let overrides = Overrides {
        out_dir: cli.out_dir,
        seed: cli.seed,
        max_iters: cli.max_iters,
    };
    let result = match &cli.command {
        Command::Run { scenario } => commands::cmd_run(scenario, &overrides),
        Command::Sweep { scenario } => commands::cmd_sweep(scenario, &overrides),
        Command::Verify { scenario } => commands::cmd_verify(scenario, &overrides),
        Command::Budget { params } => commands::cmd_budget(params),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("feasolve: {e:#}");
            std::process::exit(EXIT_INVALID);
        }
    }
}
