//! `bdpu` — batch front-end for the birth-death urn chains.
//!
//! Subcommands: `simulate` (trajectories), `stationary` (law tables),
//! `verify` (balance / embedding / limit checks), `phase-scan` (block-count
//! growth across a `beta` grid). Every command is a pure function of its
//! configuration and seed: identical inputs give byte-identical outputs.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or
//! parameters, 3 verification failure.

mod commands;
mod config;
mod output;

use clap::Parser;

fn main() {
    let cli = commands::Cli::parse();
    std::process::exit(match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    });
}
