use serde::{Deserialize, Serialize};

use super::{Controller, SlotView};
use crate::error::ConfigError;
use crate::network::{Network, PhaseId};

/// Cyclic sequence of `(phase, duration in slots)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixedTimePlan {
    pub entries: Vec<(PhaseId, u32)>,
}

impl FixedTimePlan {
    pub fn new(entries: Vec<(PhaseId, u32)>) -> Self {
        FixedTimePlan { entries }
    }

    /// Every phase of junction `j` for `green` slots, in list order.
    pub fn uniform(net: &Network, j: usize, green: u32) -> Self {
        FixedTimePlan::new(net.phase_ids(j).map(|p| (p, green)).collect())
    }

    pub fn cycle_length(&self) -> u64 {
        self.entries.iter().map(|&(_, d)| d as u64).sum()
    }

    pub fn validate(&self, net: &Network, j: usize) -> Result<(), ConfigError> {
        if self.entries.is_empty() {
            return Err(ConfigError::invalid(format!("junction {j}: empty fixed-time plan")));
        }
        for &(p, d) in &self.entries {
            if d < 1 {
                return Err(ConfigError::invalid(format!(
                    "junction {j}: fixed-time duration for phase {p} must be >= 1"
                )));
            }
            if net.phase_index(j, p).is_none() {
                return Err(ConfigError::invalid(format!(
                    "junction {j}: fixed-time plan names unknown phase {p}"
                )));
            }
        }
        Ok(())
    }
}

/// The phase whose window in the cycle contains `t mod cycle`.
pub fn fixed_time_decide(plan: &FixedTimePlan, t: u64) -> PhaseId {
    let mut offset = t % plan.cycle_length();
    for &(p, d) in &plan.entries {
        if offset < d as u64 {
            return p;
        }
        offset -= d as u64;
    }
    unreachable!("offset is below the cycle length")
}

#[derive(Debug, Clone)]
pub struct FixedTimeController {
    /// Per junction: plan with phase ids already mapped to indices.
    plans: Vec<(FixedTimePlan, Vec<usize>)>,
}

impl FixedTimeController {
    pub fn new(net: &Network, plans: Vec<FixedTimePlan>) -> Result<Self, ConfigError> {
        if plans.len() != net.num_junctions() {
            return Err(ConfigError::invalid(format!(
                "{} fixed-time plans for {} junctions",
                plans.len(),
                net.num_junctions()
            )));
        }
        let plans = plans
            .into_iter()
            .enumerate()
            .map(|(j, plan)| {
                plan.validate(net, j)?;
                let idx = plan
                    .entries
                    .iter()
                    .map(|&(p, _)| net.phase_index(j, p).expect("validated"))
                    .collect();
                Ok((plan, idx))
            })
            .collect::<Result<_, ConfigError>>()?;
        Ok(FixedTimeController { plans })
    }
}

impl Controller for FixedTimeController {
    fn name(&self) -> &str {
        "fixed-time"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize> {
        self.plans
            .iter()
            .enumerate()
            .map(|(j, (plan, _))| {
                let id = fixed_time_decide(plan, view.t);
                view.network.phase_index(j, id).expect("validated")
            })
            .collect()
    }
}
