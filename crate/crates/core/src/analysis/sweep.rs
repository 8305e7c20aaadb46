//! Empirical throughput multiplier: the largest load scaling a controller
//! survives in simulation, found by bisection on a fixed grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stability::StabilityAccumulator;
use crate::control::{Controller, ControllerKind, SlotView};
use crate::error::{ConfigError, RunError, SimError};
use crate::network::Network;
use crate::sim::{slot_rng, Scenario, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// No exogenous vehicle is ever turned away by a full entry link, and no
    /// capacity invariant breaks.
    NoCapacityBreach,
    /// Worst per-queue stability statistic at threshold `v` stays below `tau`.
    Stability { v: f64, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SearchRange {
    fn default() -> Self {
        SearchRange {
            lo: 0.05,
            hi: 3.0,
            step: 0.05,
        }
    }
}

impl SearchRange {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.step > 0.0) {
            return Err(ConfigError::invalid(format!(
                "search range needs 0 < lo <= hi and step > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| round_to(self.lo + k as f64 * self.step)).collect()
    }
}

fn round_to(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierEstimate {
    pub controller: ControllerKind,
    /// Largest passing grid point; 0 when even the lowest fails.
    pub rho: f64,
    /// The top of the search range passed, so the true value may be higher.
    pub at_upper_bound: bool,
    /// `(ρ, passed)` in evaluation order.
    pub evaluations: Vec<(f64, bool)>,
}

/// Runs `sc` scaled by `rho` under `kind` and reports whether `criterion` held.
pub fn passes(sc: &Scenario, kind: ControllerKind, rho: f64, criterion: Criterion) -> Result<bool, RunError> {
    let scaled = sc.scaled(rho);
    let mut ctrl = scaled.build_controller(kind)?;
    let mut sim = Simulation::new(&scaled);
    let horizon = scaled.horizon();
    match criterion {
        Criterion::NoCapacityBreach => {
            for _ in 0..horizon {
                match sim.advance(ctrl.as_mut()) {
                    Ok(rec) => {
                        if rec.backlog.iter().any(|&b| b > 0.0) {
                            return Ok(false);
                        }
                    }
                    Err(SimError::CapacityExceeded { .. }) => return Ok(false),
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(true)
        }
        Criterion::Stability { v, tau } => {
            let n = scaled.network.num_links();
            let mut acc = StabilityAccumulator::new(&[v], n, horizon);
            acc.observe(&sim.state().queues);
            sim.run_with(ctrl.as_mut(), |rec| {
                if rec.t + 1 < horizon {
                    acc.observe(&rec.queues_after);
                }
            })?;
            Ok(acc.finish().worst[0] < tau)
        }
    }
}

/// Bisection over the grid `lo, lo + step, ..., hi`, assuming the criterion
/// is monotone in `ρ`. Deterministic given the scenario seed.
pub fn empirical_multiplier(
    sc: &Scenario,
    kind: ControllerKind,
    criterion: Criterion,
    range: SearchRange,
) -> Result<MultiplierEstimate, RunError> {
    range.validate()?;
    let grid = range.grid();
    let mut evaluations = Vec::new();
    let mut eval = |i: usize| -> Result<bool, RunError> {
        let ok = passes(sc, kind, grid[i], criterion)?;
        evaluations.push((grid[i], ok));
        Ok(ok)
    };
    let top = grid.len() - 1;
    if eval(top)? {
        return Ok(MultiplierEstimate {
            controller: kind,
            rho: grid[top],
            at_upper_bound: true,
            evaluations,
        });
    }
    if !eval(0)? {
        return Ok(MultiplierEstimate {
            controller: kind,
            rho: 0.0,
            at_upper_bound: false,
            evaluations,
        });
    }
    // Invariant: grid[lo] passes, grid[hi] fails.
    let (mut lo, mut hi) = (0, top);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if eval(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MultiplierEstimate {
        controller: kind,
        rho: grid[lo],
        at_upper_bound: false,
        evaluations,
    })
}

/// Stationary randomized policy: in state `z`, junction `j` activates phase
/// `p` with probability `theta[j][z][p]`.
#[derive(Debug, Clone)]
pub struct RandomizedController {
    theta: Vec<Vec<Vec<f64>>>,
    seed: u64,
}

const RANDOMIZED_STREAM_BASE: u64 = 2 << 32;

impl RandomizedController {
    pub fn new(net: &Network, theta: Vec<Vec<Vec<f64>>>, seed: u64) -> Result<Self, ConfigError> {
        if theta.len() != net.num_junctions() {
            return Err(ConfigError::invalid("theta must cover every junction"));
        }
        for (j, per_state) in theta.iter().enumerate() {
            let junction = net.junction(j);
            if per_state.len() != junction.states.len()
                || per_state.iter().any(|p| {
                    p.len() != junction.phases.len()
                        || p.iter().any(|x| *x < -1e-9)
                        || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6
                })
            {
                return Err(ConfigError::invalid(format!("junction {j}: theta is not a distribution per state")));
            }
        }
        Ok(RandomizedController { theta, seed })
    }
}

impl Controller for RandomizedController {
    fn name(&self) -> &str {
        "randomized"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize> {
        self.theta
            .iter()
            .enumerate()
            .map(|(j, per_state)| {
                let probs = &per_state[view.states[j]];
                let u: f64 = slot_rng(self.seed, RANDOMIZED_STREAM_BASE + j as u64, view.t).random();
                let mut acc = 0.0;
                for (p, &w) in probs.iter().enumerate() {
                    acc += w.max(0.0);
                    if u < acc {
                        return p;
                    }
                }
                probs.iter().rposition(|&w| w > 0.0).unwrap_or(0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn load(name: &str) -> Scenario {
        Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
    }

    #[test]
    fn grid_points() {
        let r = SearchRange { lo: 0.5, hi: 1.0, step: 0.05 };
        let g = r.grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.65);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(SearchRange { lo: 0.0, hi: 1.0, step: 0.1 }.validate().is_err());
    }

    #[test]
    fn trivially_true_criterion_hits_upper_bound() {
        let sc = load("conflict2_stability.json").with_horizon(2000);
        let est = empirical_multiplier(
            &sc,
            ControllerKind::Backpressure,
            Criterion::Stability { v: f64::INFINITY, tau: 0.5 },
            SearchRange { lo: 0.5, hi: 2.0, step: 0.05 },
        )
        .unwrap();
        assert!(est.at_upper_bound);
        assert_eq!(est.rho, 2.0);
        assert_eq!(est.evaluations.len(), 1);
    }

    #[test]
    fn randomized_frequencies() {
        let sc = load("conflict2_stability.json");
        let theta = vec![vec![vec![0.3, 0.7]]];
        let mut c = RandomizedController::new(&sc.network, theta, 9).unwrap();
        let n = 20_000;
        let mut ones = 0;
        for t in 0..n {
            let d = c.decide(&SlotView {
                network: &sc.network,
                t,
                queues: &[0.0; 4],
                states: &[0],
            });
            ones += d[0];
        }
        let f = ones as f64 / n as f64;
        assert!((f - 0.7).abs() < 0.02, "{f}");
        assert!(RandomizedController::new(&sc.network, vec![vec![vec![0.5, 0.6]]], 0).is_err());
    }
}
