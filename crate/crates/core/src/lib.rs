//! Backpressure traffic-signal control on a slotted macroscopic road model.
//!
//! * [`network`]: links, junctions, phases and the per-movement rate function.
//! * [`control`]: the backpressure controller plus fixed-time and SCATS-like baselines.
//! * [`sim`]: scenarios, arrival and traffic-state processes, the slot-by-slot queue dynamics.
//! * [`analysis`]: stability statistics, Lyapunov drift, capacity-region LP and throughput sweeps.
//! * [`report`]: CSV traces, SVG plots and run manifests.
//! * [`cli`]: the `bpsignal` command-line front end.

pub mod analysis;
pub mod cli;
pub mod control;
pub mod error;
pub mod network;
pub mod report;
pub mod sim;

pub use error::{ConfigError, NetworkError, RunError, SimError};
pub use network::{JunctionId, LinkId, Movement, Network, NetworkDef, PhaseId, StateId};
