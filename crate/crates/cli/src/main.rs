//! `vspiker`: train, run and evaluate the Vacuum Spiker detector, search
//! its parameter grid and estimate inference cost in MACs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vacuum_spiker::checkpoint::CheckpointError;
use vacuum_spiker::detector::DetectorError;
use vacuum_spiker::encoder::EncoderError;
use vacuum_spiker::energy::EnergyError;
use vacuum_spiker::grid::GridError;
use vacuum_spiker::metrics::MetricsError;
use vacuum_spiker::network::NetworkError;
use vacuum_spiker::stdp::StdpError;
use vacuum_spiker::timeseries::DataError;

use crate::commands::Globals;
use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StdpError> for CliError {
    fn from(e: StdpError) -> Self {
        match e {
            StdpError::MissingRecurrentParams | StdpError::BadEpochs(_) | StdpError::BadTau => {
                CliError::Config(e.to_string())
            }
            StdpError::AnomalyInTrainingData(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::BadConfig(_) | NetworkError::Lif(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::BadFraction(_)
            | EncoderError::BadIntervalLength(_)
            | EncoderError::BadClamp(..) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Data(d) => d.into(),
            GridError::EmptyGrid => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(MetricsError, DetectorError, EnergyError);

#[derive(Parser)]
#[command(name = "vspiker", version, about = "Spiking-network anomaly detection for time series")]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for weight initialization; overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for grid search (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Directory for outputs; overrides the config
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on normal data and write checkpoint.json and train_summary.json
    Train,
    /// Run a checkpoint over the series and write detections.csv and mac_report.json
    Detect {
        /// Checkpoint to load (default: <out-dir>/checkpoint.json)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a detection run against labels and write metrics.json
    Evaluate {
        /// Detection CSV; without it the checkpoint is run over the series
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-validated grid search; writes grid_results.csv
    GridSearch,
    /// MAC counts for an architecture file; writes energy.json
    Energy {
        /// JSON list of layer descriptors
        #[arg(long)]
        spec: PathBuf,
        /// Optional energy per MAC, in joules
        #[arg(long)]
        joules_per_mac: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let needs_config = !matches!(cli.command, Command::Energy { .. });
    if needs_config && cli.config.is_none() {
        return Err(CliError::Config("--config is required".into()));
    }
    let g = Globals {
        seed: cli.seed,
        workers: cli.workers,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Train => commands::train(&cfg, &g),
        Command::Detect { checkpoint } => commands::detect(&cfg, &g, checkpoint.as_deref()),
        Command::Evaluate { detections, checkpoint } => {
            commands::evaluate(&cfg, &g, detections.as_deref(), checkpoint.as_deref())
        }
        Command::GridSearch => commands::grid(&cfg, &g),
        Command::Energy { spec, joules_per_mac } => {
            commands::energy(&spec, joules_per_mac, &cfg, &g)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
