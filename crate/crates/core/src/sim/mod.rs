//! Slotted macroscopic simulator.
//!
//! Each link's queue is split into shares, one per outgoing movement, in
//! proportion to the turn ratios. In slot `t` every movement of an active
//! phase discharges `discharge(share + fresh exogenous arrivals, R)`, capped
//! by what is there and by the residual room of a finite downstream link.
//! Vehicles moved within a slot only become dischargeable in the next one.
//! Inflow into an exit link leaves the network at once.

pub mod arrivals;
pub mod scenario;
pub mod states;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{Controller, SlotView};
use crate::error::SimError;
use crate::network::LinkId;

pub use arrivals::{sample_arrivals, ArrivalKind, ArrivalProcess};
pub use scenario::{Scenario, ScenarioFile, TurnRatios};
pub use states::{StateKind, StateProcess};

/// Words of ChaCha output reserved per slot in each stream.
const WORDS_PER_SLOT: u128 = 64;

/// RNG positioned for slot `t` of `stream`, so draws never depend on history.
pub fn slot_rng(seed: u64, stream: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(t as u128 * WORDS_PER_SLOT);
    rng
}

/// Vehicles passing in one slot from `x` waiting with maximum throughput `r`:
/// `r * (1 - exp(-x / r))`, and 0 when `r` is 0.
pub fn discharge(x: f64, r: f64) -> f64 {
    if r <= 0.0 || x <= 0.0 {
        return 0.0;
    }
    if r.is_infinite() {
        return x;
    }
    (-r * (-x / r).exp_m1()).min(x).min(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: u64,
    /// Per link.
    pub queues: Vec<f64>,
    /// Per global movement: vehicles on the upstream link bound for it.
    pub shares: Vec<f64>,
    /// Per link: vehicles with no outgoing movement to take.
    pub held: Vec<f64>,
    /// Per link: exogenous vehicles waiting outside a full entry link.
    pub backlog: Vec<f64>,
    /// Per junction traffic-state index for slot `t`.
    pub states: Vec<usize>,
}

impl SimState {
    pub fn initial(sc: &Scenario) -> Self {
        let net = &sc.network;
        SimState {
            t: 0,
            queues: vec![0.0; net.num_links()],
            shares: vec![0.0; net.movements().len()],
            held: vec![0.0; net.num_links()],
            backlog: vec![0.0; net.num_links()],
            states: sc.states.iter().map(|s| s.initial(sc.seed())).collect(),
        }
    }

    /// Initial state with the given queues, split by turn ratios.
    pub fn with_queues(sc: &Scenario, queues: &[f64]) -> Self {
        let mut st = SimState::initial(sc);
        let net = &sc.network;
        for l in net.links() {
            let q = queues[l.id.index()];
            let out = net.outgoing(l.id);
            if l.exit || q == 0.0 {
                continue;
            }
            if out.is_empty() {
                st.held[l.id.index()] = q;
            } else {
                for &m in out {
                    st.shares[m] = q * sc.turn_ratios.fractions[m];
                }
            }
            st.queues[l.id.index()] = q;
        }
        st
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    /// Phase index per junction.
    pub decisions: Vec<usize>,
    /// Traffic-state index per junction.
    pub states: Vec<usize>,
    /// Per link: exogenous vehicles generated this slot.
    pub generated: Vec<f64>,
    /// Per link: exogenous vehicles that entered the link.
    pub admitted: Vec<f64>,
    /// Per link: exogenous vehicles left waiting outside after this slot.
    pub backlog: Vec<f64>,
    /// Per global movement: vehicles moved.
    pub discharges: Vec<f64>,
    /// Discharge lost to full downstream links this slot.
    pub blocked: f64,
    /// Vehicles that left the network.
    pub exited: f64,
    pub queues_after: Vec<f64>,
    /// Sum of squared queues after the slot.
    pub lyapunov: f64,
}

impl SlotRecord {
    /// Vehicles entering link `a` from upstream movements.
    pub fn inflow(&self, net: &crate::network::Network, a: LinkId) -> f64 {
        net.incoming(a).iter().map(|&m| self.discharges[m]).sum()
    }

    /// Vehicles leaving link `a` through its movements.
    pub fn outflow(&self, net: &crate::network::Network, a: LinkId) -> f64 {
        net.outgoing(a).iter().map(|&m| self.discharges[m]).sum()
    }
}

/// A full run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario_hash: String,
    pub controller: String,
    pub initial_queues: Vec<f64>,
    pub records: Vec<SlotRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Queues at the start of slot `tau`, for `tau` in `0..=len`.
    pub fn queues_at(&self, tau: usize) -> &[f64] {
        if tau == 0 {
            &self.initial_queues
        } else {
            &self.records[tau - 1].queues_after
        }
    }
}

/// Advances `state` by one slot under `decisions`.
///
/// With `capacity_rule` off, finite link capacities do not limit transfers
/// (breaches are still reported).
pub fn step_in_place(
    sc: &Scenario,
    state: &mut SimState,
    decisions: &[usize],
    capacity_rule: bool,
) -> Result<SlotRecord, SimError> {
    let net = &sc.network;
    let slot = state.t;
    let nj = net.num_junctions();
    if decisions.len() != nj {
        return Err(SimError::DecisionShape {
            slot,
            expected: nj,
            got: decisions.len(),
        });
    }
    for (j, &p) in decisions.iter().enumerate() {
        if p >= net.junction(j).phases.len() {
            return Err(SimError::UnknownPhase {
                slot,
                junction: j,
                phase: p,
            });
        }
    }

    let nl = net.num_links();
    let nm = net.movements().len();
    let ratios = &sc.turn_ratios.fractions;
    let mut generated = vec![0.0; nl];
    let mut admitted = vec![0.0; nl];
    let mut fresh = vec![0.0; nm];
    let mut exited = 0.0;

    for link in net.links() {
        let a = link.id.index();
        if let Some(p) = &sc.arrivals[a] {
            generated[a] = sample_arrivals(p, sc.seed(), slot);
        }
        let want = state.backlog[a] + generated[a];
        if want == 0.0 {
            continue;
        }
        let room = if capacity_rule && link.capacity.is_finite() && !link.exit {
            (link.capacity.limit() - state.queues[a]).max(0.0)
        } else {
            f64::INFINITY
        };
        let adm = want.min(room);
        admitted[a] = adm;
        state.backlog[a] = want - adm;
        let out = net.outgoing(link.id);
        if link.exit {
            exited += adm;
        } else if out.is_empty() {
            state.held[a] += adm;
        } else {
            for &m in out {
                fresh[m] = adm * ratios[m];
            }
        }
    }

    // Room left on each finite link, before this slot's departures.
    let mut residual: Vec<f64> = net
        .links()
        .iter()
        .map(|l| {
            if capacity_rule && l.capacity.is_finite() && !l.exit {
                l.capacity.limit() - (state.queues[l.id.index()] + admitted[l.id.index()])
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut discharges = vec![0.0; nm];
    let mut blocked = 0.0;
    for (j, &p) in decisions.iter().enumerate() {
        let z = state.states[j];
        for &local in &net.junction(j).phases[p].movements {
            let g = net.global_movement(j, local);
            let avail = state.shares[g] + fresh[g];
            let r = net.rate_at(j, z, p, local);
            let want = discharge(avail, r).min(avail);
            let to = net.movements()[g].to.index();
            let d = want.min(residual[to].max(0.0));
            residual[to] -= d;
            blocked += want - d;
            discharges[g] = d;
        }
    }

    for g in 0..nm {
        let s = state.shares[g] + fresh[g] - discharges[g];
        state.shares[g] = if s < 0.0 && s > -1e-9 { 0.0 } else { s };
    }
    for (g, mv) in net.movements().iter().enumerate() {
        let d = discharges[g];
        if d == 0.0 {
            continue;
        }
        let b = mv.to;
        let out = net.outgoing(b);
        if net.link(b).exit {
            exited += d;
        } else if out.is_empty() {
            state.held[b.index()] += d;
        } else {
            for &m in out {
                state.shares[m] += d * ratios[m];
            }
        }
    }

    let mut lyapunov = 0.0;
    for link in net.links() {
        let a = link.id.index();
        let q: f64 = net.outgoing(link.id).iter().map(|&m| state.shares[m]).sum::<f64>() + state.held[a];
        if q < -1e-9 || net.outgoing(link.id).iter().any(|&m| state.shares[m] < -1e-9) {
            return Err(SimError::NegativeQueue {
                slot,
                link: link.id.0,
                value: q,
            });
        }
        if link.capacity.is_finite() && q > link.capacity.limit() * (1.0 + 1e-12) + 1e-9 {
            return Err(SimError::CapacityExceeded {
                slot,
                link: link.id.0,
                value: q,
                capacity: link.capacity.limit(),
            });
        }
        state.queues[a] = q;
        lyapunov += q * q;
    }

    let record = SlotRecord {
        t: slot,
        decisions: decisions.to_vec(),
        states: state.states.clone(),
        generated,
        admitted,
        backlog: state.backlog.clone(),
        discharges,
        blocked,
        exited,
        queues_after: state.queues.clone(),
        lyapunov,
    };

    for (j, proc) in sc.states.iter().enumerate() {
        state.states[j] = proc.next(sc.seed(), slot, state.states[j]);
    }
    state.t += 1;
    Ok(record)
}

/// Pure form of [`step_in_place`] with the capacity rule on.
pub fn step(sc: &Scenario, state: &SimState, decisions: &[usize]) -> Result<(SimState, SlotRecord), SimError> {
    let mut next = state.clone();
    let rec = step_in_place(sc, &mut next, decisions, true)?;
    Ok((next, rec))
}

/// Drives a scenario with a controller, slot by slot.
pub struct Simulation<'a> {
    sc: &'a Scenario,
    state: SimState,
    capacity_rule: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(sc: &'a Scenario) -> Self {
        Simulation {
            sc,
            state: SimState::initial(sc),
            capacity_rule: true,
        }
    }

    pub fn from_state(sc: &'a Scenario, state: SimState) -> Self {
        Simulation {
            sc,
            state,
            capacity_rule: true,
        }
    }

    pub fn set_capacity_rule(&mut self, on: bool) {
        self.capacity_rule = on;
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn step(&mut self, decisions: &[usize]) -> Result<SlotRecord, SimError> {
        step_in_place(self.sc, &mut self.state, decisions, self.capacity_rule)
    }

    /// One decide-then-step cycle.
    pub fn advance(&mut self, controller: &mut dyn Controller) -> Result<SlotRecord, SimError> {
        let decisions = controller.decide(&SlotView {
            network: &self.sc.network,
            t: self.state.t,
            queues: &self.state.queues,
            states: &self.state.states,
        });
        let rec = self.step(&decisions)?;
        controller.observe(&self.sc.network, &rec);
        Ok(rec)
    }

    /// Runs until the scenario horizon, handing each record to `sink`.
    pub fn run_with(
        &mut self,
        controller: &mut dyn Controller,
        mut sink: impl FnMut(&SlotRecord),
    ) -> Result<(), SimError> {
        while self.state.t < self.sc.horizon() {
            let rec = self.advance(controller)?;
            sink(&rec);
        }
        Ok(())
    }

    /// Runs to the horizon and keeps every record.
    pub fn run(mut self, controller: &mut dyn Controller) -> Result<Trace, SimError> {
        let initial_queues = self.state.queues.clone();
        let mut records = Vec::with_capacity(self.sc.horizon().saturating_sub(self.state.t) as usize);
        self.run_with(controller, |r| records.push(r.clone()))?;
        Ok(Trace {
            scenario_hash: self.sc.hash(),
            controller: controller.name().to_string(),
            initial_queues,
            records,
        })
    }
}

/// Runs `sc` with its configured controller.
pub fn run(sc: &Scenario) -> Result<Trace, crate::error::RunError> {
    let mut ctrl = sc.build_controller(sc.controller_kind())?;
    Ok(Simulation::new(sc).run(ctrl.as_mut())?)
}
