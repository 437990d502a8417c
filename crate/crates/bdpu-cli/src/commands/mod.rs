//! Argument surface and dispatch.

mod phase;
mod simulate;
mod tables;
mod verify_cmd;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ConfigMap;

/// Exit-code contract: 0 pass, 1 I/O, 2 configuration, 3 check failure.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Config(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::CheckFailed(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<bdpu::Error> for CliError {
    fn from(e: bdpu::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "bdpu",
    about = "Birth-death urn chains: simulation, stationary laws, verification",
    version
)]
pub struct Cli {
    /// Optional `key = value` file supplying defaults for the flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a trajectory and write its snapshot table.
    Simulate(simulate::SimulateArgs),
    /// Tabulate a closed-form law.
    Stationary(tables::StationaryArgs),
    /// Run a verification check; exits 3 if it fails.
    Verify(verify_cmd::VerifyArgs),
    /// Block-count growth and stationarity diagnostics over a beta grid.
    PhaseScan(phase::PhaseScanArgs),
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    let config = ConfigMap::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => simulate::run(args, &config),
        Command::Stationary(args) => tables::run(args, &config),
        Command::Verify(args) => verify_cmd::run(args, &config),
        Command::PhaseScan(args) => phase::run(args, &config),
    }
}
