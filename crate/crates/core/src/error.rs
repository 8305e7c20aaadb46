use thiserror::Error;

use crate::network::ValidationReport;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network:\n{0}")]
    Invalid(ValidationReport),
}

/// Scenario and controller configuration problems.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

/// Runtime invariant breaches detected while stepping the simulation.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("slot {slot}: negative queue {value} on link {link}")]
    NegativeQueue { slot: u64, link: u32, value: f64 },
    #[error("slot {slot}: link {link} holds {value} vehicles, capacity {capacity}")]
    CapacityExceeded {
        slot: u64,
        link: u32,
        value: f64,
        capacity: f64,
    },
    #[error("slot {slot}: controller returned {got} decisions for {expected} junctions")]
    DecisionShape { slot: u64, expected: usize, got: usize },
    #[error("slot {slot}: junction {junction} has no phase index {phase}")]
    UnknownPhase { slot: u64, junction: usize, phase: usize },
}

/// Anything that can stop a configured run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
