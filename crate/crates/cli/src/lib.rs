//! Command-line front end for the radial aggregation solvers.
//!
//! Subcommands: `steady`, `evolve`, `asymp-largeq`, `asymp-smalleps` and `compare`.
//! Exit status 0 on success, 1 on solver or integrator failure, 2 on configuration errors.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

use config::{Cli, Command, RunConfig, Settings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }
}

/// Merges flags over the optional config file and resolves defaults.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let merged = cli.command.settings().clone().merged_over(file);
    RunConfig::resolve(cli.command.name(), merged)
}

/// Runs one parsed invocation and returns the written files.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Steady(_) => commands::run_steady(&cfg),
        Command::Evolve(_) => commands::run_evolve(&cfg),
        Command::AsympLargeq(_) => commands::run_asymp_largeq(&cfg),
        Command::AsympSmalleps(_) => commands::run_asymp_smalleps(&cfg),
        Command::Compare(_) => commands::run_compare(&cfg),
    }
}
