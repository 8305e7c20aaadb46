use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::{Capacity, JunctionId, LinkId, Movement, NetworkDef, PhaseId, StateId};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateLinkId(LinkId),
    LinkIdsNotDense { expected: usize, found: LinkId },
    DuplicateJunctionId(JunctionId),
    JunctionIdsNotDense { expected: usize, found: JunctionId },
    InvalidCapacity { link: LinkId, capacity: f64 },
    ExitLinkHasOutgoing { link: LinkId, junction: JunctionId },
    UnknownLink { junction: JunctionId, link: LinkId },
    SelfLoop { junction: JunctionId, movement: Movement },
    DuplicateMovement { junction: JunctionId, movement: Movement },
    SharedMovement { movement: Movement, junctions: (JunctionId, JunctionId) },
    NoPhases(JunctionId),
    EmptyPhase { junction: JunctionId, phase: PhaseId },
    DuplicatePhaseId { junction: JunctionId, phase: PhaseId },
    PhaseMovementOutOfRange { junction: JunctionId, phase: PhaseId, movement: usize },
    UnreachableMovement { junction: JunctionId, movement: Movement },
    NoStates(JunctionId),
    DuplicateStateId { junction: JunctionId, state: StateId },
    InvalidDefaultSaturation { junction: JunctionId, value: f64 },
    RateUnknownPhase { junction: JunctionId, phase: PhaseId },
    RateUnknownState { junction: JunctionId, state: StateId },
    RateMovementOutOfRange { junction: JunctionId, movement: usize },
    InvalidRate { junction: JunctionId, phase: PhaseId, movement: usize, state: StateId, rate: f64 },
    RateOutsidePhase { junction: JunctionId, phase: PhaseId, movement: usize, state: StateId },
    DuplicateRate { junction: JunctionId, phase: PhaseId, movement: usize, state: StateId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateLinkId(l) => write!(f, "duplicate link id {l}"),
            LinkIdsNotDense { expected, found } => {
                write!(f, "link ids not dense: expected {expected}, found {found}")
            }
            DuplicateJunctionId(j) => write!(f, "duplicate junction id {j}"),
            JunctionIdsNotDense { expected, found } => {
                write!(f, "junction ids not dense: expected {expected}, found {found}")
            }
            InvalidCapacity { link, capacity } => {
                write!(f, "link {link}: capacity {capacity} must be positive")
            }
            ExitLinkHasOutgoing { link, junction } => {
                write!(f, "exit link {link} has outgoing movement at junction {junction}")
            }
            UnknownLink { junction, link } => {
                write!(f, "junction {junction}: movement references unknown link {link}")
            }
            SelfLoop { junction, movement } => {
                write!(f, "junction {junction}: movement {movement} starts and ends on the same link")
            }
            DuplicateMovement { junction, movement } => {
                write!(f, "junction {junction}: duplicate movement {movement}")
            }
            SharedMovement { movement, junctions } => write!(
                f,
                "movement shared across junctions: {movement} at {} and {}",
                junctions.0, junctions.1
            ),
            NoPhases(j) => write!(f, "junction {j}: no phases"),
            EmptyPhase { junction, phase } => {
                write!(f, "junction {junction}: phase {phase} has no movements")
            }
            DuplicatePhaseId { junction, phase } => {
                write!(f, "junction {junction}: duplicate phase id {phase}")
            }
            PhaseMovementOutOfRange { junction, phase, movement } => write!(
                f,
                "junction {junction}: phase {phase} references movement index {movement} out of range"
            ),
            UnreachableMovement { junction, movement } => {
                write!(f, "junction {junction}: movement {movement} is in no phase")
            }
            NoStates(j) => write!(f, "junction {j}: no traffic states"),
            DuplicateStateId { junction, state } => {
                write!(f, "junction {junction}: duplicate state id {state}")
            }
            InvalidDefaultSaturation { junction, value } => {
                write!(f, "junction {junction}: default_saturation {value} must be finite and >= 0")
            }
            RateUnknownPhase { junction, phase } => {
                write!(f, "junction {junction}: rate entry for unknown phase {phase}")
            }
            RateUnknownState { junction, state } => {
                write!(f, "junction {junction}: rate entry for unknown state {state}")
            }
            RateMovementOutOfRange { junction, movement } => {
                write!(f, "junction {junction}: rate entry movement index {movement} out of range")
            }
            InvalidRate { junction, phase, movement, state, rate } => write!(
                f,
                "junction {junction}: rate {rate} for (phase {phase}, movement {movement}, state {state}) must be finite and >= 0"
            ),
            RateOutsidePhase { junction, phase, movement, state } => write!(
                f,
                "junction {junction}: nonzero rate for movement {movement} not served by phase {phase} (state {state})"
            ),
            DuplicateRate { junction, phase, movement, state } => write!(
                f,
                "junction {junction}: duplicate rate entry (phase {phase}, movement {movement}, state {state})"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a network description.
pub fn validate_network(net: &NetworkDef) -> ValidationReport {
    let mut out = Vec::new();

    let mut link_ids = BTreeSet::new();
    for l in &net.links {
        if !link_ids.insert(l.id) {
            out.push(Violation::DuplicateLinkId(l.id));
        }
        if let Capacity::Finite(c) = l.capacity {
            if !(c > 0.0) || !c.is_finite() {
                out.push(Violation::InvalidCapacity { link: l.id, capacity: c });
            }
        }
    }
    for (expected, id) in link_ids.iter().enumerate() {
        if id.index() != expected {
            out.push(Violation::LinkIdsNotDense { expected, found: *id });
            break;
        }
    }
    let exits: BTreeSet<LinkId> = net.links.iter().filter(|l| l.exit).map(|l| l.id).collect();

    let mut junction_ids = BTreeSet::new();
    for j in &net.junctions {
        if !junction_ids.insert(j.id) {
            out.push(Violation::DuplicateJunctionId(j.id));
        }
    }
    for (expected, id) in junction_ids.iter().enumerate() {
        if id.index() != expected {
            out.push(Violation::JunctionIdsNotDense { expected, found: *id });
            break;
        }
    }

    let mut owner: HashMap<Movement, JunctionId> = HashMap::new();
    for j in &net.junctions {
        let jid = j.id;
        let mut seen = BTreeSet::new();
        for m in &j.movements {
            for link in [m.from, m.to] {
                if !link_ids.contains(&link) {
                    out.push(Violation::UnknownLink { junction: jid, link });
                }
            }
            if m.from == m.to {
                out.push(Violation::SelfLoop { junction: jid, movement: *m });
            }
            if exits.contains(&m.from) {
                out.push(Violation::ExitLinkHasOutgoing { link: m.from, junction: jid });
            }
            if !seen.insert(*m) {
                out.push(Violation::DuplicateMovement { junction: jid, movement: *m });
                continue;
            }
            match owner.get(m) {
                Some(&other) if other != jid => out.push(Violation::SharedMovement {
                    movement: *m,
                    junctions: (other, jid),
                }),
                _ => {
                    owner.insert(*m, jid);
                }
            }
        }

        if j.phases.is_empty() {
            out.push(Violation::NoPhases(jid));
        }
        let mut phase_ids = BTreeSet::new();
        let mut covered = vec![false; j.movements.len()];
        for p in &j.phases {
            if !phase_ids.insert(p.id) {
                out.push(Violation::DuplicatePhaseId { junction: jid, phase: p.id });
            }
            if p.movements.is_empty() {
                out.push(Violation::EmptyPhase { junction: jid, phase: p.id });
            }
            for &m in &p.movements {
                match covered.get_mut(m) {
                    Some(c) => *c = true,
                    None => out.push(Violation::PhaseMovementOutOfRange {
                        junction: jid,
                        phase: p.id,
                        movement: m,
                    }),
                }
            }
        }
        for (k, c) in covered.iter().enumerate() {
            if !c {
                out.push(Violation::UnreachableMovement {
                    junction: jid,
                    movement: j.movements[k],
                });
            }
        }

        if j.states.is_empty() {
            out.push(Violation::NoStates(jid));
        }
        let mut state_ids = BTreeSet::new();
        for s in &j.states {
            if !state_ids.insert(s.id) {
                out.push(Violation::DuplicateStateId { junction: jid, state: s.id });
            }
        }

        if !(j.default_saturation >= 0.0) || !j.default_saturation.is_finite() {
            out.push(Violation::InvalidDefaultSaturation {
                junction: jid,
                value: j.default_saturation,
            });
        }

        let phases: BTreeMap<PhaseId, &Vec<usize>> =
            j.phases.iter().map(|p| (p.id, &p.movements)).collect();
        let mut entries = BTreeSet::new();
        for e in &j.rates {
            let key = (e.phase, e.movement, e.state);
            let Some(served) = phases.get(&e.phase) else {
                out.push(Violation::RateUnknownPhase { junction: jid, phase: e.phase });
                continue;
            };
            if !state_ids.contains(&e.state) {
                out.push(Violation::RateUnknownState { junction: jid, state: e.state });
                continue;
            }
            if e.movement >= j.movements.len() {
                out.push(Violation::RateMovementOutOfRange {
                    junction: jid,
                    movement: e.movement,
                });
                continue;
            }
            if !entries.insert(key) {
                out.push(Violation::DuplicateRate {
                    junction: jid,
                    phase: e.phase,
                    movement: e.movement,
                    state: e.state,
                });
            }
            if !(e.rate >= 0.0) || !e.rate.is_finite() {
                out.push(Violation::InvalidRate {
                    junction: jid,
                    phase: e.phase,
                    movement: e.movement,
                    state: e.state,
                    rate: e.rate,
                });
            } else if e.rate != 0.0 && !served.contains(&e.movement) {
                out.push(Violation::RateOutsidePhase {
                    junction: jid,
                    phase: e.phase,
                    movement: e.movement,
                    state: e.state,
                });
            }
        }
    }

    ValidationReport { violations: out }
}
