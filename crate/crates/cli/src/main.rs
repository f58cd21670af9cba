use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod artifacts;
mod commands;

/// Boundary-control workbench for an elastic string with memory: eigensystem,
/// quasi-exponential families, moment-problem control synthesis, forward and
/// dual simulation, and basis/observability diagnostics.
#[derive(Parser)]
#[command(name = "memstring", version, about)]
pub struct Args {
    /// Path to the JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,

    /// Dotted-key configuration overrides, e.g. --set kernel.a=0.2
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Seed for randomized scans.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,

    /// Worker threads (default: all cores). Results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
pub enum Command {
    /// Solve the eigensystem and emit eig.csv.
    Eig,
    /// Integrate the quasi-exponential families; per-mode CSVs with the
    /// reference exponentials and deviation magnitudes.
    Quasi,
    /// Spectrum of the normalized family Gram matrix (gram.json).
    Gram,
    /// Synthesize the boundary control for the configured target
    /// (g.csv, f.csv, report.json).
    Synthesize,
    /// Simulate the configured control forward (trajectory.csv, terminal.csv).
    Simulate,
    /// Boundary trace of the dual system with the configured target as
    /// initial data (trace.csv).
    Observe,
    /// Randomized observability scan (scan.json).
    ObserveScan,
    /// Simulate a reference control, synthesize a control for its terminal
    /// state, re-simulate and verify (roundtrip.json).
    Roundtrip,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage problems are validation failures (exit 1), not clap's default 2,
    // which this tool reserves for numerical failures
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: validation: {e}");
            return ExitCode::from(1);
        }
    };
    match commands::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.class());
            ExitCode::from(e.exit_code())
        }
    }
}
