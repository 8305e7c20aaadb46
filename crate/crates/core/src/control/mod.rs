//! Signal controllers. Every controller returns one phase index per junction
//! each slot and may watch the outcome of the previous slot.

pub mod backpressure;
pub mod fixed_time;
pub mod scats;

use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::sim::SlotRecord;

pub use backpressure::{BackpressureController, TiePolicy};
pub use fixed_time::{FixedTimeController, FixedTimePlan};
pub use scats::{ScatsController, ScatsParams};

/// What a controller may look at when deciding slot `t`.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub network: &'a Network,
    pub t: u64,
    /// Per-link queue lengths at the start of the slot.
    pub queues: &'a [f64],
    /// Per-junction traffic-state index.
    pub states: &'a [usize],
}

pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Phase index (position in the junction's phase list) per junction.
    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize>;

    /// Called after each slot with what happened.
    fn observe(&mut self, _net: &Network, _record: &SlotRecord) {}
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize> {
        (**self).decide(view)
    }

    fn observe(&mut self, net: &Network, record: &SlotRecord) {
        (**self).observe(net, record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Backpressure,
    #[serde(alias = "fixed-time")]
    FixedTime,
    Scats,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Backpressure,
        ControllerKind::FixedTime,
        ControllerKind::Scats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Backpressure => "backpressure",
            ControllerKind::FixedTime => "fixed-time",
            ControllerKind::Scats => "scats",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backpressure" | "bp" => Ok(ControllerKind::Backpressure),
            "fixed-time" | "fixed_time" | "ft" => Ok(ControllerKind::FixedTime),
            "scats" => Ok(ControllerKind::Scats),
            other => Err(format!(
                "unknown controller '{other}' (expected backpressure, fixed-time or scats)"
            )),
        }
    }
}
