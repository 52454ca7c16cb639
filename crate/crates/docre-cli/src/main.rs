//! Command-line workflows for document-level relation extraction.
//!
//! Subcommands: `ingest` (parse + process a corpus), `extract` (run a
//! paradigm or a single stage), `eval` (score predictions), `gen-tuning`
//! (emit the instruction-tuning dataset) and `compare-paradigms` (one table,
//! one row per paradigm).
//!
//! Exit codes: 0 success, 1 evaluation/assertion mismatch, 2 input error,
//! 3 backend failure.

use clap::Parser;

mod commands;
mod config;
mod runner;

use commands::{Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => {}
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            std::process::exit(code);
        }
    }
}
