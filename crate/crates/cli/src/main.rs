//! `baroreflex` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod analyze;
mod classify;
mod common;
mod ingest;
mod simulate;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "baroreflex", version, about = "Baroreflex delay model: simulation, classification and region maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Simulate(simulate::Opts),
    Classify(classify::Opts),
    Sweep(sweep::Opts),
    Analyze(analyze::Opts),
    Ingest(ingest::Opts),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(o) => simulate::run(o),
        Command::Classify(o) => classify::run(o),
        Command::Sweep(o) => sweep::run(o),
        Command::Analyze(o) => analyze::run(o),
        Command::Ingest(o) => ingest::run(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.kind.exit_code())
        }
    }
}
