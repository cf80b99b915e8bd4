//! `corners`: command-line driver for the corners-core library.

mod cmd;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cmd::census::CensusCommand;
use cmd::construct::ConstructArgs;
use cmd::optimize::OptimizeCommand;
use cmd::regularity::RegularityArgs;
use cmd::tfunc::TfuncCommand;
use cmd::Completion;
use corners_core::Error;
use manifest::{RunManifest, Session, MANIFEST_SCHEMA_VERSION};

/// Exit status: 0 success, 1 validation or domain error, 2 resource or cap
/// diagnostic, 3 internal invariant failure.
const EXIT_INPUT: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "corners", version, about = "Corner functional, corner census, random construction and regularity tools")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where to write the run manifest; stderr when omitted.
    #[arg(long, global = true)]
    manifest: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate and transform kernels.
    #[command(subcommand)]
    Tfunc(TfuncCommand),
    /// Minimize T at a fixed mean.
    #[command(subcommand)]
    Optimize(OptimizeCommand),
    /// Count corners by difference.
    #[command(subcommand)]
    Census(CensusCommand),
    /// Sample a set from a kernel and measure its census.
    Construct(ConstructArgs),
    /// Search for a regular boxing of a set over F_2^n.
    Regularity(RegularityArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource(_) => EXIT_RESOURCE,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_INPUT);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot start the thread pool: {e}");
        return ExitCode::from(EXIT_RESOURCE);
    }
    let start = Instant::now();
    let mut session = Session::default();
    let result = match &cli.command {
        Command::Tfunc(c) => cmd::tfunc::run(c, &mut session),
        Command::Optimize(c) => cmd::optimize::run(c, &mut session),
        Command::Census(c) => cmd::census::run(c, &mut session),
        Command::Construct(c) => cmd::construct::run(c, &mut session),
        Command::Regularity(c) => cmd::regularity::run(c, &mut session),
    };
    let code = match &result {
        Ok(Completion::Done) => 0,
        Ok(Completion::CapsExhausted) => {
            eprintln!("caps exhausted before the run completed; outputs hold the last state reached");
            EXIT_RESOURCE
        }
        Ok(Completion::InvariantViolated) => {
            eprintln!("error: the run reported invariant violations");
            EXIT_INVARIANT
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e)
        }
    };
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        subcommand: session.subcommand,
        config: session.config,
        seeds: session.seeds,
        inputs: session.inputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        exit_code: code,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    match &cli.manifest {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text + "\n") {
                eprintln!("error: cannot write manifest {path}: {e}");
                return ExitCode::from(EXIT_INPUT.max(code));
            }
        }
        None => eprintln!("{text}"),
    }
    ExitCode::from(code)
}
