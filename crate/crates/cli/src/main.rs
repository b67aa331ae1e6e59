//! `causal-rd` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 I/O error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl From<causal_rd::Error> for CliError {
    fn from(e: causal_rd::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "causal-rd", version, about = "Nonanticipative rate-distortion and uncoded transmission toolkit")]
struct Cli {
    /// JSON parameter file or a manifest from an earlier run; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; defaults to a per-command name in $CAUSAL_RD_OUT_DIR or `.`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for simulation and enumeration. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form rate-distortion curve of a binary symmetric Markov source.
    Rdf(commands::RdfArgs),
    /// Cost-constrained capacity of the two-state binary channel.
    Capacity(commands::CapacityArgs),
    /// Rate vs capacity at the matched cost level.
    Match(commands::MatchArgs),
    /// Monte Carlo excess-distortion estimate for a realization scheme.
    Simulate(commands::SimulateArgs),
    /// Concentration bound on the excess-distortion probability over a horizon grid.
    Bound(commands::BoundArgs),
    /// Exact enumeration report: directed information, excess distortion, structural checks.
    Exact(commands::ExactArgs),
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let ctx = commands::Context { config: cli.config, out: cli.out };
    let go = || match cli.command {
        Command::Rdf(a) => commands::rdf(&ctx, a),
        Command::Capacity(a) => commands::capacity(&ctx, a),
        Command::Match(a) => commands::matching(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Bound(a) => commands::bound(&ctx, a),
        Command::Exact(a) => commands::exact(&ctx, a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Validation(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
