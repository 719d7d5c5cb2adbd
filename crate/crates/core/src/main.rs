//! Batch front-end: each subcommand reads one JSON run configuration and
//! emits artifacts into an output directory. Exit codes: 0 all requested
//! checks pass, 1 a check failed (failure.json written), 2 configuration
//! or I/O error (no partial artifacts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tuglab::config::{run_file, Outcome};

#[derive(Parser)]
#[command(name = "tuglab", version, about = "tug-of-war game solver and verifier")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// solve the dynamic-programming fixed point on a lattice
    Solve(RunArgs),
    /// play seeded game episodes and estimate values
    Simulate(RunArgs),
    /// run the comparison-function verifier sweeps
    Verify(RunArgs),
    /// solve and measure regularity moduli and the gap check
    Measure(RunArgs),
    /// solve across a list of step radii and compare moduli
    Sweep(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.cmd {
        Cmd::Solve(a) => ("solve", a),
        Cmd::Simulate(a) => ("simulate", a),
        Cmd::Verify(a) => ("verify", a),
        Cmd::Measure(a) => ("measure", a),
        Cmd::Sweep(a) => ("sweep", a),
    };
    match run_file(name, &args.config, args.out.as_deref()) {
        Ok(Outcome::Success) => ExitCode::from(0),
        Ok(Outcome::CheckFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
