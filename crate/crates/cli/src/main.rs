//! `crossover`: fit reference models, simulate the adaptive pilot, build
//! synthetic cohorts, analyse run sets and serve live tracking sessions.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use crate::commands::{AnalyzeArgs, CohortArgs, FitReferenceArgs, ServeArgs, SimulateArgs, UsageError};
use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "crossover", version, about = "Adaptive human-pilot model workbench")]
struct Cli {
    /// JSON file with per-command defaults, e.g. {"simulate": {"dt": 0.005}}.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the crossover reference model and write its Bode data.
    FitReference(FitReferenceArgs),
    /// Simulate one scenario with the adaptive pilot model.
    Simulate(SimulateArgs),
    /// Generate k synthetic participants plus the noise-free model run.
    Cohort(CohortArgs),
    /// Compare participant runs with the model run.
    Analyze(AnalyzeArgs),
    /// Serve live tracking sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::FitReference(a) => commands::fit_reference(cfg.merge("fit-reference", &a)?),
        Command::Simulate(a) => commands::simulate(cfg.merge("simulate", &a)?),
        Command::Cohort(a) => commands::cohort(cfg.merge("cohort", &a)?),
        Command::Analyze(a) => commands::analyze(cfg.merge("analyze", &a)?),
        Command::Serve(a) => commands::serve(cfg.merge("serve", &a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(usage) => Cli::command().error(ErrorKind::MissingRequiredArgument, &usage.0).exit(),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
