mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fleetgrid::Error;

#[derive(Debug, Parser)]
#[command(name = "fleetgrid", version, about = "Car sharing demand simulation and fleet vehicle-to-grid scheduling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario config (JSON). Counts are full scale and multiplied by --scale.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = fleetgrid::scenario::DEFAULT_SCALE)]
    pub scale: f64,
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Growth preset 1..6; the default config when --config is absent is preset 3.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub preset: Option<u8>,
    /// Mode chooser name; defaults to gbt-categorical when a model is given, else rule-categorical.
    #[arg(long, global = true)]
    pub chooser: Option<String>,
    /// Reference directory for `validate`.
    #[arg(long, global = true)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Base world and base population.
    SynthPop,
    /// Weighted sample of subscribers from a base population.
    SampleUsers,
    /// Adds new stations by fixed-center clustering of home locations.
    PlaceStations,
    /// Scales the fleet to the configured size.
    ScaleFleet,
    /// Trains the gradient boosted mode choice model; corpus files of --in are carried along.
    TrainModechoice,
    /// Agent-based simulation of one week.
    SimulateAgent,
    /// Fits per-slot event distributions to a booking log.
    FitEventsim,
    /// Samples booking days from fitted event distributions.
    SimulateEvent,
    /// Compares a booking log to a reference.
    Validate,
    /// Runs growth presets end to end.
    Scenario,
    /// Flexibility envelope of a fleet.
    V2gEnvelope,
    /// Peak shaving over the configured price levels.
    V2gPeakshave,
    /// Monetary outcome of peak shaving for the DSO and the fleet.
    V2gMoney,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SynthPop => "synth-pop",
            Command::SampleUsers => "sample-users",
            Command::PlaceStations => "place-stations",
            Command::ScaleFleet => "scale-fleet",
            Command::TrainModechoice => "train-modechoice",
            Command::SimulateAgent => "simulate-agent",
            Command::FitEventsim => "fit-eventsim",
            Command::SimulateEvent => "simulate-event",
            Command::Validate => "validate",
            Command::Scenario => "scenario",
            Command::V2gEnvelope => "v2g-envelope",
            Command::V2gPeakshave => "v2g-peakshave",
            Command::V2gMoney => "v2g-money",
        }
    }
}

/// Outcome of a subcommand that finished writing its outputs.
pub enum Status {
    Done,
    NotConverged(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLEETGRID_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(msg)) => {
            eprintln!("error: not converged: {msg}");
            ExitCode::from(2)
        }
        Err(e @ Error::NonConvergence(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
