//! The `bpsignal` command line. Exit codes: 0 success, 1 usage or
//! configuration error, 2 runtime failure.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::control::ControllerKind;
use crate::error::{ConfigError, RunError};

pub use commands::{execute, replay, Artifacts};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bpsignal", version, about = "Backpressure signal control: simulation, capacity analysis and controller comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run one scenario and write trace.csv, plots, stability and drift tables.
    Simulate(SimulateArgs),
    /// Decide whether an arrival vector lies in the capacity region, or find
    /// the largest multiple of a direction that does.
    Capacity(CapacityArgs),
    /// Search the largest arrival multiplier each controller sustains.
    Sweep(SweepArgs),
    /// Run several controllers on the same scenario and compare queues.
    Compare(CompareArgs),
    /// Re-run a manifest and check every artifact is byte-identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = "BPSIGNAL_OUT_DIR", default_value = "bpsignal-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    /// Overrides the scenario's controller.
    #[arg(long)]
    pub controller: Option<ControllerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Multiplies every arrival process.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Stability thresholds V; defaults to 10, 10 x links, 100 and 1000.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Number of equal-count drift bins.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["network", "scenario"])))]
#[command(group(clap::ArgGroup::new("load").required(true).args(["lambda", "direction"])))]
pub struct CapacityArgs {
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Takes the network, state distribution and turn ratios from a scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Arrival rates, one per entry link in id order or one per link.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    /// Direction for the multiplier search, same layout as --lambda.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    /// State distribution per junction: `0.8,0.2;1` (junctions separated by `;`).
    #[arg(long)]
    pub pi: Option<String>,
    /// Also require flows to follow the scenario's turn ratios.
    #[arg(long, requires = "scenario")]
    pub routed: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CriterionArg {
    NoBreach,
    Stability,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, value_delimiter = ',', default_values_t = ControllerKind::ALL)]
    pub controllers: Vec<ControllerKind>,
    #[arg(long, default_value_t = 0.05)]
    pub lo: f64,
    #[arg(long, default_value_t = 3.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = CriterionArg::NoBreach)]
    pub criterion: CriterionArg,
    /// Threshold V for the stability criterion; defaults to 10 x links.
    #[arg(long)]
    pub v: Option<f64>,
    /// Largest allowed stability statistic.
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Max,
    Avg,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, value_delimiter = ',', default_values_t = ControllerKind::ALL)]
    pub controllers: Vec<ControllerKind>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Metric::Max, Metric::Avg])]
    pub metrics: Vec<Metric>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where regenerated artifacts go; defaults to `replay/` next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure split by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.into()),
            RunError::Sim(s) => Failure::Runtime(s.into()),
        }
    }
}

impl From<crate::report::ReportError> for Failure {
    fn from(e: crate::report::ReportError) -> Self {
        match e {
            crate::report::ReportError::Manifest(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<crate::analysis::RegionError> for Failure {
    fn from(e: crate::analysis::RegionError) -> Self {
        match e {
            crate::analysis::RegionError::Lp(_) => Failure::Runtime(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.code()
        }
    }
}
