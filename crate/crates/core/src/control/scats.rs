//! A SCATS-like degree-of-saturation equalizer.
//!
//! This is an approximation of the adaptive system used as the comparison
//! baseline, not a replica. Each junction runs its phases cyclically with
//! greens equal to the active split plan's fractions of the cycle length. At
//! every cycle boundary:
//!
//! 1. the cycle length moves one step (5% of `c_max` by default) up if the
//!    highest per-phase degree of saturation (DS) exceeded the target, down
//!    if it fell short, clamped to `[c_min, c_max]`;
//! 2. each plan in the library is scored by the largest deviation of the
//!    predicted per-phase DS from their mean, where the predicted DS of a
//!    phase under a plan is its observed effectively-used green divided by
//!    the green that plan would give it. The best plan gets a vote;
//! 3. the active plan becomes the most-voted plan over the last
//!    `vote_window` cycles (ties go to the most recent vote).
//!
//! "Effectively used" green for one slot is the fraction of the active
//! phase's saturation discharge actually achieved, so a queue-limited slot
//! counts as partly unused.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Controller, SlotView};
use crate::error::ConfigError;
use crate::network::Network;
use crate::sim::SlotRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatsParams {
    pub c_min: u32,
    pub c_max: u32,
    pub target_ds: f64,
    /// Cycle adjustment per cycle, as a fraction of `c_max`.
    pub step_fraction: f64,
    pub vote_window: usize,
    /// Starting cycle length; `c_min` when absent.
    pub initial_cycle: Option<u32>,
    /// Per-junction plan libraries; the default library when absent.
    pub libraries: Option<Vec<Vec<SplitPlan>>>,
}

impl Default for ScatsParams {
    fn default() -> Self {
        ScatsParams {
            c_min: 40,
            c_max: 120,
            target_ds: 0.9,
            step_fraction: 0.05,
            vote_window: 3,
            initial_cycle: None,
            libraries: None,
        }
    }
}

impl ScatsParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.c_min == 0 || self.c_min > self.c_max {
            return Err(ConfigError::invalid(format!(
                "scats: need 0 < c_min <= c_max, got {}..{}",
                self.c_min, self.c_max
            )));
        }
        if let Some(c) = self.initial_cycle {
            if c < self.c_min || c > self.c_max {
                return Err(ConfigError::invalid("scats: initial_cycle outside [c_min, c_max]"));
            }
        }
        if !(self.target_ds > 0.0) || !(self.step_fraction >= 0.0) || self.vote_window == 0 {
            return Err(ConfigError::invalid(
                "scats: target_ds must be > 0, step_fraction >= 0, vote_window >= 1",
            ));
        }
        Ok(())
    }

    fn step(&self) -> u32 {
        ((self.step_fraction * self.c_max as f64).round() as u32).max(1)
    }
}

/// Green fractions per phase (junction phase order), summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitPlan(pub Vec<f64>);

impl SplitPlan {
    pub fn validate(&self, n_phases: usize) -> Result<(), ConfigError> {
        if self.0.len() != n_phases {
            return Err(ConfigError::invalid(format!(
                "split plan has {} fractions for {n_phases} phases",
                self.0.len()
            )));
        }
        if self.0.iter().any(|f| !(*f >= 0.0)) {
            return Err(ConfigError::invalid("split fractions must be >= 0"));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Integer greens summing to `cycle` (largest-remainder rounding).
    pub fn greens(&self, cycle: u32) -> Vec<u32> {
        let raw: Vec<f64> = self.0.iter().map(|f| f * cycle as f64).collect();
        let mut greens: Vec<u32> = raw.iter().map(|r| r.floor() as u32).collect();
        let mut left = cycle - greens.iter().sum::<u32>().min(cycle);
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(raw.len() * cycle as usize) {
            if left == 0 {
                break;
            }
            if self.0[i] > 0.0 {
                greens[i] += 1;
                left -= 1;
            }
        }
        greens
    }
}

/// Five plans: an equal split, then four plans that each favour one phase
/// (cycling through phases, with a stronger bias on the second pass).
pub fn default_library(n_phases: usize) -> Vec<SplitPlan> {
    let n = n_phases as f64;
    let mut lib = vec![SplitPlan(vec![1.0 / n; n_phases])];
    if n_phases < 2 {
        lib.extend((0..4).map(|_| SplitPlan(vec![1.0])));
        return lib;
    }
    for k in 0..4 {
        let favoured = k % n_phases;
        let bias = 0.2 * (1 + k / n_phases) as f64;
        let share = 1.0 / n + (1.0 - 1.0 / n) * bias;
        let rest = (1.0 - share) / (n - 1.0);
        lib.push(SplitPlan(
            (0..n_phases).map(|p| if p == favoured { share } else { rest }).collect(),
        ));
    }
    lib
}

/// Effectively used green divided by total green.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DegreeOfSaturation(pub f64);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("used green {used} exceeds total green {total}")]
pub struct DsContractViolation {
    pub used: f64,
    pub total: f64,
}

pub fn degree_of_saturation(used: f64, total: f64) -> Result<DegreeOfSaturation, DsContractViolation> {
    if used > total * (1.0 + 1e-12) || used < 0.0 {
        return Err(DsContractViolation { used, total });
    }
    if total == 0.0 {
        return Ok(DegreeOfSaturation(0.0));
    }
    Ok(DegreeOfSaturation((used / total).min(1.0)))
}

/// What the junction saw in the previous slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachObservation {
    /// Phase index that was active.
    pub phase: usize,
    /// Effectively used fraction of that slot's green, in `[0, 1]`.
    pub used: f64,
}

/// Index of the plan whose predicted per-phase DS values deviate least from
/// their mean. `used` is effectively used green per phase over `elapsed` slots.
pub fn vote_winner(library: &[SplitPlan], used: &[f64], elapsed: f64) -> usize {
    let demand: Vec<f64> = used
        .iter()
        .map(|u| if elapsed > 0.0 { u / elapsed } else { 0.0 })
        .collect();
    let score = |plan: &SplitPlan| -> f64 {
        let ds: Vec<f64> = demand
            .iter()
            .zip(&plan.0)
            .map(|(&d, &f)| {
                if f > 0.0 {
                    d / f
                } else if d > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        if ds.iter().any(|d| d.is_infinite()) {
            return f64::INFINITY;
        }
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        ds.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max)
    };
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (k, plan) in library.iter().enumerate() {
        let s = score(plan);
        if s < best_score {
            best = k;
            best_score = s;
        }
    }
    best
}

/// Per-junction controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatsState {
    params: ScatsParams,
    library: Vec<SplitPlan>,
    cycle: u32,
    plan: usize,
    cycle_start: Option<u64>,
    greens: Vec<u32>,
    used: Vec<f64>,
    offered: Vec<f64>,
    votes: VecDeque<usize>,
}

impl ScatsState {
    pub fn new(params: ScatsParams, library: Vec<SplitPlan>) -> Result<Self, ConfigError> {
        params.validate()?;
        let n = library
            .first()
            .map(|p| p.0.len())
            .ok_or_else(|| ConfigError::invalid("scats: empty plan library"))?;
        for plan in &library {
            plan.validate(n)?;
        }
        let cycle = params.initial_cycle.unwrap_or(params.c_min);
        Ok(ScatsState {
            params,
            greens: library[0].greens(cycle),
            library,
            cycle,
            plan: 0,
            cycle_start: None,
            used: vec![0.0; n],
            offered: vec![0.0; n],
            votes: VecDeque::new(),
        })
    }

    pub fn cycle_length(&self) -> u32 {
        self.cycle
    }

    pub fn active_plan(&self) -> usize {
        self.plan
    }

    pub fn greens(&self) -> &[u32] {
        &self.greens
    }

    /// Feeds last slot's observation and returns the phase index for slot `t`.
    pub fn step(&mut self, obs: Option<&ApproachObservation>, t: u64) -> usize {
        if let Some(o) = obs {
            if o.phase < self.used.len() {
                self.offered[o.phase] += 1.0;
                self.used[o.phase] += o.used.clamp(0.0, 1.0);
            }
        }
        let start = match self.cycle_start {
            None => {
                self.cycle_start = Some(t);
                t
            }
            Some(s) if t.saturating_sub(s) >= self.cycle as u64 => {
                self.end_cycle((t - s) as f64);
                self.cycle_start = Some(t);
                t
            }
            Some(s) => s,
        };
        self.phase_at(t - start)
    }

    fn phase_at(&self, offset: u64) -> usize {
        let mut acc = 0u64;
        for (p, &g) in self.greens.iter().enumerate() {
            acc += g as u64;
            if offset < acc {
                return p;
            }
        }
        self.greens.iter().rposition(|&g| g > 0).unwrap_or(0)
    }

    fn end_cycle(&mut self, elapsed: f64) {
        let ds_max = self
            .used
            .iter()
            .zip(&self.offered)
            .filter(|(_, &o)| o > 0.0)
            .map(|(&u, &o)| degree_of_saturation(u.min(o), o).map_or(0.0, |d| d.0))
            .fold(0.0, f64::max);
        let step = self.params.step();
        if ds_max > self.params.target_ds {
            self.cycle = (self.cycle + step).min(self.params.c_max);
        } else if ds_max < self.params.target_ds {
            self.cycle = self.cycle.saturating_sub(step).max(self.params.c_min);
        }

        let winner = vote_winner(&self.library, &self.used, elapsed);
        self.votes.push_back(winner);
        while self.votes.len() > self.params.vote_window {
            self.votes.pop_front();
        }
        let mut best = (0usize, 0usize);
        for (age, &k) in self.votes.iter().enumerate() {
            let count = self.votes.iter().filter(|&&v| v == k).count();
            // Later votes win ties because `age` grows.
            if count > best.0 || (count == best.0 && age >= best.1) {
                best = (count, age);
                self.plan = k;
            }
        }

        self.greens = self.library[self.plan].greens(self.cycle);
        self.used.iter_mut().for_each(|u| *u = 0.0);
        self.offered.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Pure form of [`ScatsState::step`].
pub fn scats_decide(
    state: &ScatsState,
    obs: Option<&ApproachObservation>,
    t: u64,
) -> (usize, ScatsState) {
    let mut next = state.clone();
    let phase = next.step(obs, t);
    (phase, next)
}

#[derive(Debug, Clone)]
pub struct ScatsController {
    states: Vec<ScatsState>,
    pending: Vec<Option<ApproachObservation>>,
}

impl ScatsController {
    pub fn new(net: &Network, params: &ScatsParams) -> Result<Self, ConfigError> {
        params.validate()?;
        if let Some(libs) = &params.libraries {
            if libs.len() != net.num_junctions() {
                return Err(ConfigError::invalid(format!(
                    "scats: {} plan libraries for {} junctions",
                    libs.len(),
                    net.num_junctions()
                )));
            }
        }
        let states = (0..net.num_junctions())
            .map(|j| {
                let n = net.junction(j).phases.len();
                let lib = match &params.libraries {
                    Some(libs) => libs[j].clone(),
                    None => default_library(n),
                };
                if lib.iter().any(|p| p.0.len() != n) {
                    return Err(ConfigError::invalid(format!(
                        "scats: junction {j} library does not match its {n} phases"
                    )));
                }
                let mut p = params.clone();
                p.libraries = None;
                ScatsState::new(p, lib)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScatsController {
            pending: vec![None; states.len()],
            states,
        })
    }

    pub fn states(&self) -> &[ScatsState] {
        &self.states
    }
}

impl Controller for ScatsController {
    fn name(&self) -> &str {
        "scats"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize> {
        self.states
            .iter_mut()
            .zip(self.pending.iter_mut())
            .map(|(s, obs)| s.step(obs.take().as_ref(), view.t))
            .collect()
    }

    fn observe(&mut self, net: &Network, record: &SlotRecord) {
        for (j, slot) in self.pending.iter_mut().enumerate() {
            let phase = record.decisions[j];
            let state = record.states[j];
            let mut capacity = 0.0;
            let mut moved = 0.0;
            for &m in &net.junction(j).phases[phase].movements {
                capacity += net.rate_at(j, state, phase, m);
                moved += record.discharges[net.global_movement(j, m)];
            }
            let used = if capacity > 0.0 { (moved / capacity).min(1.0) } else { 0.0 };
            *slot = Some(ApproachObservation { phase, used });
        }
    }
}
