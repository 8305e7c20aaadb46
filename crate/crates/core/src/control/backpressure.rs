//! Per-junction backpressure phase selection.
//!
//! Each movement `(a, b)` gets weight `Q_a - Q_b` (an exit link counts as an
//! empty downstream queue). A phase's pressure is the rate-weighted sum of
//! the weights of the movements it serves, and the junction activates a
//! phase of maximum pressure. Only queues on links touching the junction and
//! the junction's own traffic state are read.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Controller, SlotView};
use crate::network::{JunctionId, LinkId, Network};

/// Downstream end of a movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Downstream {
    Queue(f64),
    Exit,
}

/// `q_from - q_to`, with an exit link contributing zero.
pub fn movement_weight(q_from: f64, q_to: Downstream) -> f64 {
    match q_to {
        Downstream::Queue(q) => q_from - q,
        Downstream::Exit => q_from,
    }
}

/// Queue lengths on every link touched by one junction, plus its traffic state.
///
/// `queues` is aligned with [`Network::local_links`] for the junction.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObservation {
    pub junction: usize,
    pub queues: Vec<f64>,
    /// Index into the junction's state list.
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObservationError {
    #[error("junction {junction}: no queue value for link {link}")]
    MissingLink { junction: JunctionId, link: LinkId },
    #[error("junction {junction}: state index {state} out of range")]
    State { junction: JunctionId, state: usize },
    #[error("junction {0} does not exist")]
    Junction(JunctionId),
}

impl LocalObservation {
    /// Slices the junction's local view out of a network-wide queue vector.
    pub fn gather(net: &Network, junction: usize, queues: &[f64], state: usize) -> Self {
        let local = net
            .local_links(junction)
            .iter()
            .map(|l| queues[l.index()])
            .collect();
        LocalObservation {
            junction,
            queues: local,
            state,
        }
    }

    /// Builds an observation from `(link, queue)` pairs, checking that every
    /// link the junction's movements touch is present.
    pub fn from_pairs(
        net: &Network,
        junction: JunctionId,
        pairs: &[(LinkId, f64)],
        state: usize,
    ) -> Result<Self, ObservationError> {
        let j = junction.index();
        if j >= net.num_junctions() {
            return Err(ObservationError::Junction(junction));
        }
        if state >= net.junction(j).states.len() {
            return Err(ObservationError::State { junction, state });
        }
        let queues = net
            .local_links(j)
            .iter()
            .map(|&link| {
                pairs
                    .iter()
                    .find(|(l, _)| *l == link)
                    .map(|(_, q)| *q)
                    .ok_or(ObservationError::MissingLink { junction, link })
            })
            .collect::<Result<_, _>>()?;
        Ok(LocalObservation {
            junction: j,
            queues,
            state,
        })
    }
}

/// How to choose among phases of equal maximum pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Smallest phase id among the tied phases.
    #[default]
    LowestPhaseId,
    /// The previous phase if it is tied for the maximum, else the smallest id.
    KeepPrevious,
    /// Uniform choice among tied phases, driven by `seed`.
    SeededRandom { seed: u64 },
}

/// Pressure of phase index `phase` at the observed junction.
pub fn phase_pressure(net: &Network, obs: &LocalObservation, phase: usize) -> f64 {
    let j = obs.junction;
    let junction = net.junction(j);
    junction.phases[phase]
        .movements
        .iter()
        .map(|&m| {
            let (from, to) = net.movement_slots(j, m);
            let to_link = junction.movements[m].to;
            let downstream = if net.link(to_link).exit {
                Downstream::Exit
            } else {
                Downstream::Queue(obs.queues[to])
            };
            movement_weight(obs.queues[from], downstream) * net.rate_at(j, obs.state, phase, m)
        })
        .sum()
}

/// Returns the index of a maximum-pressure phase, ties resolved by `tie`.
pub fn select_phase(
    net: &Network,
    obs: &LocalObservation,
    tie: TiePolicy,
    prev: Option<usize>,
) -> usize {
    let n = net.junction(obs.junction).phases.len();
    let mut best = f64::NEG_INFINITY;
    let mut tied: Vec<usize> = Vec::with_capacity(n);
    for p in 0..n {
        let s = phase_pressure(net, obs, p);
        if s > best {
            best = s;
            tied.clear();
            tied.push(p);
        } else if s == best {
            tied.push(p);
        }
    }
    // NaN pressures never compare; phase sets are nonempty, so fall back to 0.
    if tied.is_empty() {
        return 0;
    }
    let phases = &net.junction(obs.junction).phases;
    let lowest = || *tied.iter().min_by_key(|&&p| phases[p].id).expect("nonempty");
    match tie {
        _ if tied.len() == 1 => tied[0],
        TiePolicy::LowestPhaseId => lowest(),
        TiePolicy::KeepPrevious => match prev {
            Some(p) if tied.contains(&p) => p,
            _ => lowest(),
        },
        TiePolicy::SeededRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (obs.junction as u64).rotate_left(32));
            tied.sort_by_key(|&p| phases[p].id);
            tied[rng.random_range(0..tied.len())]
        }
    }
}

/// Runs [`select_phase`] independently at every junction.
pub fn decide_all(
    net: &Network,
    queues: &[f64],
    states: &[usize],
    tie: TiePolicy,
    prev: &[Option<usize>],
) -> Vec<usize> {
    (0..net.num_junctions())
        .map(|j| {
            let obs = LocalObservation::gather(net, j, queues, states[j]);
            select_phase(net, &obs, tie, prev.get(j).copied().flatten())
        })
        .collect()
}

/// Stateful wrapper that remembers previous decisions for the tie policy.
#[derive(Debug, Clone)]
pub struct BackpressureController {
    tie: TiePolicy,
    prev: Vec<Option<usize>>,
}

impl BackpressureController {
    pub fn new(net: &Network, tie: TiePolicy) -> Self {
        BackpressureController {
            tie,
            prev: vec![None; net.num_junctions()],
        }
    }
}

impl Controller for BackpressureController {
    fn name(&self) -> &str {
        "backpressure"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Vec<usize> {
        // Fresh tie-break stream per slot so a random policy does not lock in.
        let tie = match self.tie {
            TiePolicy::SeededRandom { seed } => TiePolicy::SeededRandom {
                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(view.t),
            },
            other => other,
        };
        let out = decide_all(view.network, view.queues, view.states, tie, &self.prev);
        for (p, d) in self.prev.iter_mut().zip(&out) {
            *p = Some(*d);
        }
        out
    }
}
