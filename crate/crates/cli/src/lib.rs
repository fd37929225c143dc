//! Command line front end: config parsing, dispatch and report output.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use report::{Envelope, Format};

#[derive(Debug, Parser)]
#[command(name = "queuereg", version, about = "Optimal price functions for queues with chosen service durations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report file; stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal alpha*, x* and g*.
    Solve,
    /// Simulate under the configured or optimal price.
    Simulate,
    /// Solve, simulate at the solved price, compare.
    Verify,
    /// Tabulate (alpha, x_alpha, g) over the domain.
    Sweep,
    /// Optimal join threshold and entry fee.
    Balking,
    /// Retrial optimum, simulation and externality comparison.
    Retrial,
    /// Twin-run externality of a tagged demand.
    Externalities,
}

/// Runs one command and returns the rendered report.
pub fn execute(command: Command, cfg: &RunConfig, seed: u64, format: Format) -> Result<String, CliError> {
    fn wrap<T: serde::Serialize>(cfg: &RunConfig, seed: u64, format: Format, body: T) -> Result<String, CliError> {
        report::render(
            &Envelope {
                seed,
                config: cfg.clone(),
                body,
            },
            format,
        )
    }
    match command {
        Command::Solve => wrap(cfg, seed, format, commands::solve(cfg, seed)?),
        Command::Simulate => wrap(cfg, seed, format, commands::simulate(cfg, seed)?),
        Command::Verify => wrap(cfg, seed, format, commands::verify(cfg, seed)?),
        Command::Sweep => wrap(cfg, seed, format, commands::sweep_alpha(cfg, seed)?),
        Command::Balking => wrap(cfg, seed, format, commands::balking(cfg, seed)?),
        Command::Retrial => wrap(cfg, seed, format, commands::retrial(cfg, seed)?),
        Command::Externalities => wrap(cfg, seed, format, commands::externalities_cmd(cfg, seed)?),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let text = execute(cli.command, &cfg, seed, cli.format)?;
    report::emit(&text, cli.out.as_deref())
}
