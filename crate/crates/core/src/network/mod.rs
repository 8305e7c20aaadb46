//! Road-network data model.
//!
//! A network is a set of links (road segments holding queues) and signalized
//! junctions. Each junction owns a set of movements `(from, to)`, a list of
//! phases (subsets of movements that may run together), a list of traffic
//! states and a rate table giving vehicles per slot for every
//! `(phase, movement, state)`.
//!
//! [`NetworkDef`] is the plain description as it appears on disk. It may be
//! invalid; [`validate_network`] reports every broken invariant. [`Network`]
//! is the validated, immutable form used by controllers, the simulator and
//! the analysis code. It carries dense rate tables so the per-slot hot path
//! never touches a map.

mod format;
mod validate;

pub use format::{load_network, save_network};
pub use validate::{validate_network, ValidationReport, Violation};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

use crate::error::NetworkError;

macro_rules! small_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

small_id!(
    /// Link identifier, dense in `[0, N)`.
    LinkId
);
small_id!(
    /// Junction identifier, dense in `[0, L)`.
    JunctionId
);
small_id!(PhaseId);
small_id!(StateId);

/// Storage capacity of a link in vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Capacity {
    Finite(f64),
    Unbounded,
}

impl Capacity {
    pub fn limit(self) -> f64 {
        match self {
            Capacity::Finite(c) => c,
            Capacity::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Capacity::Finite(_))
    }
}

impl From<Option<f64>> for Capacity {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(c) => Capacity::Finite(c),
            None => Capacity::Unbounded,
        }
    }
}

impl From<Capacity> for Option<f64> {
    fn from(c: Capacity) -> Self {
        match c {
            Capacity::Finite(c) => Some(c),
            Capacity::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub capacity: Capacity,
    /// Exogenous arrivals may enter here.
    #[serde(default)]
    pub entry: bool,
    /// Vehicles moving onto this link leave the network.
    #[serde(default)]
    pub exit: bool,
}

/// An ordered pair of links through one junction. Serialized as `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(LinkId, LinkId)", into = "(LinkId, LinkId)")]
pub struct Movement {
    pub from: LinkId,
    pub to: LinkId,
}

impl Movement {
    pub fn new(from: u32, to: u32) -> Self {
        Movement {
            from: LinkId(from),
            to: LinkId(to),
        }
    }
}

impl From<(LinkId, LinkId)> for Movement {
    fn from((from, to): (LinkId, LinkId)) -> Self {
        Movement { from, to }
    }
}

impl From<Movement> for (LinkId, LinkId) {
    fn from(m: Movement) -> Self {
        (m.from, m.to)
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

/// A set of movements given right of way together. `movements` holds
/// indices into the owning junction's movement list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub id: PhaseId,
    pub movements: Vec<usize>,
}

/// A traffic state. On disk either a bare id or `{"id": .., "label": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StateRepr", into = "StateRepr")]
pub struct TrafficState {
    pub id: StateId,
    pub label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StateRepr {
    Bare(StateId),
    Labelled {
        id: StateId,
        label: Option<String>,
    },
}

impl From<StateRepr> for TrafficState {
    fn from(r: StateRepr) -> Self {
        match r {
            StateRepr::Bare(id) => TrafficState { id, label: None },
            StateRepr::Labelled { id, label } => TrafficState { id, label },
        }
    }
}

impl From<TrafficState> for StateRepr {
    fn from(s: TrafficState) -> Self {
        match s.label {
            None => StateRepr::Bare(s.id),
            Some(label) => StateRepr::Labelled {
                id: s.id,
                label: Some(label),
            },
        }
    }
}

/// One explicit entry of a junction's rate table. `movement` indexes the
/// junction movement list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    pub phase: PhaseId,
    pub movement: usize,
    pub state: StateId,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    pub id: JunctionId,
    pub movements: Vec<Movement>,
    pub phases: Vec<Phase>,
    pub states: Vec<TrafficState>,
    #[serde(default)]
    pub rates: Vec<RateEntry>,
    /// Rate for a movement served by a phase when the table has no entry.
    pub default_saturation: f64,
}

impl Junction {
    pub fn rate_table(&self) -> RateTable<'_> {
        RateTable { junction: self }
    }
}

/// Read-only view of a junction's rate function.
///
/// Returns 0 for a movement the phase does not serve, the explicit entry
/// when present, and the default saturation rate otherwise.
pub struct RateTable<'a> {
    junction: &'a Junction,
}

impl RateTable<'_> {
    pub fn lookup(&self, phase: PhaseId, movement: usize, state: StateId) -> Option<f64> {
        let j = self.junction;
        let p = j.phases.iter().find(|p| p.id == phase)?;
        if movement >= j.movements.len() || !j.states.iter().any(|s| s.id == state) {
            return None;
        }
        if !p.movements.contains(&movement) {
            return Some(0.0);
        }
        let explicit = j
            .rates
            .iter()
            .find(|e| e.phase == phase && e.movement == movement && e.state == state);
        Some(explicit.map_or(j.default_saturation, |e| e.rate))
    }
}

/// On-disk network description. May violate invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDef {
    pub links: Vec<Link>,
    pub junctions: Vec<Junction>,
}

/// A movement in the network-wide movement list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovementRef {
    pub junction: usize,
    /// Position in the junction's movement list.
    pub local: usize,
    pub from: LinkId,
    pub to: LinkId,
}

#[derive(Debug, Clone)]
struct JunctionIndex {
    /// `[state][phase][movement]`, zero where the phase does not serve the movement.
    rates: Vec<f64>,
    n_phases: usize,
    n_movements: usize,
    /// Links touched by this junction's movements, sorted by id.
    local_links: Vec<LinkId>,
    /// Per movement: positions of `from` and `to` in `local_links`.
    movement_slots: Vec<(usize, usize)>,
    /// Global movement index for each local movement.
    global: Vec<usize>,
    phase_by_id: HashMap<PhaseId, usize>,
    state_by_id: HashMap<StateId, usize>,
}

/// Validated, immutable road network.
#[derive(Debug, Clone)]
pub struct Network {
    def: NetworkDef,
    index: Vec<JunctionIndex>,
    movements: Vec<MovementRef>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    movement_by_pair: HashMap<Movement, usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown junction {0}")]
    Junction(JunctionId),
    #[error("unknown phase {phase} at junction {junction}")]
    Phase { junction: JunctionId, phase: PhaseId },
    #[error("unknown state {state} at junction {junction}")]
    State { junction: JunctionId, state: StateId },
    #[error("movement {movement} does not belong to junction {junction}")]
    Movement {
        junction: JunctionId,
        movement: Movement,
    },
}

impl Network {
    /// Validates `def` and builds the lookup tables.
    pub fn new(mut def: NetworkDef) -> Result<Self, NetworkError> {
        let report = validate_network(&def);
        if !report.is_valid() {
            return Err(NetworkError::Invalid(report));
        }
        def.links.sort_by_key(|l| l.id);
        def.junctions.sort_by_key(|j| j.id);

        let mut movements = Vec::new();
        let mut outgoing = vec![Vec::new(); def.links.len()];
        let mut incoming = vec![Vec::new(); def.links.len()];
        let mut movement_by_pair = HashMap::new();
        let mut index = Vec::with_capacity(def.junctions.len());

        for (ji, j) in def.junctions.iter().enumerate() {
            let n_phases = j.phases.len();
            let n_movements = j.movements.len();
            let table = j.rate_table();
            let mut rates = vec![0.0; j.states.len() * n_phases * n_movements];
            for (zi, z) in j.states.iter().enumerate() {
                for (pi, p) in j.phases.iter().enumerate() {
                    for &m in &p.movements {
                        rates[(zi * n_phases + pi) * n_movements + m] =
                            table.lookup(p.id, m, z.id).unwrap_or(0.0);
                    }
                }
            }

            let mut local_links: Vec<LinkId> = j
                .movements
                .iter()
                .flat_map(|m| [m.from, m.to])
                .collect();
            local_links.sort();
            local_links.dedup();
            let slot = |l: LinkId| local_links.binary_search(&l).expect("link is local");
            let movement_slots = j.movements.iter().map(|m| (slot(m.from), slot(m.to))).collect();

            let mut global = Vec::with_capacity(n_movements);
            for (local, m) in j.movements.iter().enumerate() {
                let g = movements.len();
                movements.push(MovementRef {
                    junction: ji,
                    local,
                    from: m.from,
                    to: m.to,
                });
                outgoing[m.from.index()].push(g);
                incoming[m.to.index()].push(g);
                movement_by_pair.insert(*m, g);
                global.push(g);
            }

            index.push(JunctionIndex {
                rates,
                n_phases,
                n_movements,
                local_links,
                movement_slots,
                global,
                phase_by_id: j.phases.iter().enumerate().map(|(i, p)| (p.id, i)).collect(),
                state_by_id: j.states.iter().enumerate().map(|(i, s)| (s.id, i)).collect(),
            });
        }

        Ok(Network {
            def,
            index,
            movements,
            outgoing,
            incoming,
            movement_by_pair,
        })
    }

    pub fn def(&self) -> &NetworkDef {
        &self.def
    }

    pub fn links(&self) -> &[Link] {
        &self.def.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.def.links[id.index()]
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.def.junctions
    }

    pub fn junction(&self, j: usize) -> &Junction {
        &self.def.junctions[j]
    }

    pub fn num_links(&self) -> usize {
        self.def.links.len()
    }

    pub fn num_junctions(&self) -> usize {
        self.def.junctions.len()
    }

    /// Network-wide movement list, grouped by junction in junction order.
    pub fn movements(&self) -> &[MovementRef] {
        &self.movements
    }

    /// Global indices of movements leaving `link`.
    pub fn outgoing(&self, link: LinkId) -> &[usize] {
        &self.outgoing[link.index()]
    }

    /// Global indices of movements entering `link`.
    pub fn incoming(&self, link: LinkId) -> &[usize] {
        &self.incoming[link.index()]
    }

    pub fn movement_index(&self, m: Movement) -> Option<usize> {
        self.movement_by_pair.get(&m).copied()
    }

    /// Global movement index of local movement `local` at junction `j`.
    pub fn global_movement(&self, j: usize, local: usize) -> usize {
        self.index[j].global[local]
    }

    pub fn phase_index(&self, j: usize, id: PhaseId) -> Option<usize> {
        self.index.get(j)?.phase_by_id.get(&id).copied()
    }

    pub fn state_index(&self, j: usize, id: StateId) -> Option<usize> {
        self.index.get(j)?.state_by_id.get(&id).copied()
    }

    /// Links referenced by any movement of junction `j`, sorted by id.
    pub fn local_links(&self, j: usize) -> &[LinkId] {
        &self.index[j].local_links
    }

    /// Positions of a movement's endpoints in [`Network::local_links`].
    pub fn movement_slots(&self, j: usize, local: usize) -> (usize, usize) {
        self.index[j].movement_slots[local]
    }

    /// Rate by dense indices: state, phase and movement positions within junction `j`.
    #[inline]
    pub fn rate_at(&self, j: usize, state: usize, phase: usize, movement: usize) -> f64 {
        let ix = &self.index[j];
        ix.rates[(state * ix.n_phases + phase) * ix.n_movements + movement]
    }

    /// The rate function: vehicles per slot moving along `movement` through
    /// junction `j` when `phase` is active in traffic state `state`.
    pub fn rate(
        &self,
        j: JunctionId,
        phase: PhaseId,
        movement: Movement,
        state: StateId,
    ) -> Result<f64, LookupError> {
        let ji = j.index();
        let junction = self.def.junctions.get(ji).ok_or(LookupError::Junction(j))?;
        let p = self
            .phase_index(ji, phase)
            .ok_or(LookupError::Phase { junction: j, phase })?;
        let z = self
            .state_index(ji, state)
            .ok_or(LookupError::State { junction: j, state })?;
        let m = junction
            .movements
            .iter()
            .position(|x| *x == movement)
            .ok_or(LookupError::Movement {
                junction: j,
                movement,
            })?;
        Ok(self.rate_at(ji, z, p, m))
    }

    /// Phase ids of junction `j` in list order.
    pub fn phase_ids(&self, j: usize) -> impl Iterator<Item = PhaseId> + '_ {
        self.def.junctions[j].phases.iter().map(|p| p.id)
    }

    pub fn entry_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.def.links.iter().filter(|l| l.entry).map(|l| l.id)
    }
}
