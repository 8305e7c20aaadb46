//! Traffic-state processes, one per junction. State values are indices into
//! the junction's state list.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::slot_rng;
use crate::error::ConfigError;
use crate::network::{Network, StateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateKind {
    Fixed { state: StateId },
    /// Independent draw each slot; `probs` follows the junction's state list.
    Iid { probs: Vec<f64> },
    /// Row-stochastic transition matrix; `initial` is a state id.
    Markov { matrix: Vec<Vec<f64>>, initial: StateId },
}

/// A validated state process bound to one junction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateProcess {
    kind: StateKind,
    n: usize,
    fixed_index: usize,
    stream: u64,
}

fn check_distribution(p: &[f64], n: usize, what: &str) -> Result<(), ConfigError> {
    if p.len() != n {
        return Err(ConfigError::invalid(format!("{what}: {} entries for {n} states", p.len())));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(ConfigError::invalid(format!("{what}: probabilities must be >= 0")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(ConfigError::invalid(format!("{what}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

/// True when some power of the support pattern is strictly positive, i.e. the
/// chain is irreducible and aperiodic.
pub fn is_primitive(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    if n == 0 {
        return false;
    }
    let base: Vec<Vec<bool>> = matrix.iter().map(|r| r.iter().map(|x| *x > 0.0).collect()).collect();
    let mut pow = base.clone();
    // Wielandt: primitive iff A^((n-1)^2 + 1) > 0.
    let k = (n - 1) * (n - 1) + 1;
    for _ in 1..k {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for l in 0..n {
                if pow[i][l] {
                    for j in 0..n {
                        next[i][j] |= base[l][j];
                    }
                }
            }
        }
        pow = next;
    }
    pow.iter().all(|r| r.iter().all(|x| *x))
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    for (i, p) in probs.iter().enumerate().take(last) {
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

impl StateProcess {
    pub fn new(net: &Network, junction: usize, kind: StateKind, stream: u64) -> Result<Self, ConfigError> {
        let n = net.junction(junction).states.len();
        let lookup = |id: StateId| {
            net.state_index(junction, id)
                .ok_or_else(|| ConfigError::invalid(format!("junction {junction}: unknown state {id}")))
        };
        let fixed_index = match &kind {
            StateKind::Fixed { state } => lookup(*state)?,
            StateKind::Iid { probs } => {
                check_distribution(probs, n, &format!("junction {junction} state probabilities"))?;
                0
            }
            StateKind::Markov { matrix, initial } => {
                if matrix.len() != n {
                    return Err(ConfigError::invalid(format!(
                        "junction {junction}: transition matrix has {} rows for {n} states",
                        matrix.len()
                    )));
                }
                for (i, row) in matrix.iter().enumerate() {
                    check_distribution(row, n, &format!("junction {junction} transition row {i}"))?;
                }
                if !is_primitive(matrix) {
                    return Err(ConfigError::invalid(format!(
                        "junction {junction}: state chain must be irreducible and aperiodic"
                    )));
                }
                lookup(*initial)?
            }
        };
        Ok(StateProcess {
            kind,
            n,
            fixed_index,
            stream,
        })
    }

    /// First state of the junction, held forever.
    pub fn default_for(net: &Network, junction: usize, stream: u64) -> Self {
        let id = net.junction(junction).states[0].id;
        StateProcess::new(net, junction, StateKind::Fixed { state: id }, stream).expect("first state exists")
    }

    pub fn kind(&self) -> &StateKind {
        &self.kind
    }

    /// State at slot 0.
    pub fn initial(&self, seed: u64) -> usize {
        match &self.kind {
            StateKind::Iid { probs } => draw(probs, slot_rng(seed, self.stream, 0).random()),
            _ => self.fixed_index,
        }
    }

    /// State at slot `t + 1` given the state at `t`.
    pub fn next(&self, seed: u64, t: u64, current: usize) -> usize {
        match &self.kind {
            StateKind::Fixed { .. } => self.fixed_index,
            StateKind::Iid { probs } => draw(probs, slot_rng(seed, self.stream, t + 1).random()),
            StateKind::Markov { matrix, .. } => {
                draw(&matrix[current], slot_rng(seed, self.stream, t + 1).random())
            }
        }
    }

    /// Long-run fraction of slots in each state.
    pub fn stationary(&self) -> Vec<f64> {
        match &self.kind {
            StateKind::Fixed { .. } => {
                let mut p = vec![0.0; self.n];
                p[self.fixed_index] = 1.0;
                p
            }
            StateKind::Iid { probs } => probs.clone(),
            StateKind::Markov { matrix, .. } => {
                let mut p = vec![1.0 / self.n as f64; self.n];
                for _ in 0..100_000 {
                    let mut next = vec![0.0; self.n];
                    for (i, row) in matrix.iter().enumerate() {
                        for (j, m) in row.iter().enumerate() {
                            next[j] += p[i] * m;
                        }
                    }
                    let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
                    p = next;
                    if diff < 1e-15 {
                        break;
                    }
                }
                p
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_network;

    fn tandem() -> Network {
        load_network(include_bytes!("../../../../scenarios/tandem.json")).unwrap()
    }

    #[test]
    fn primitive_check() {
        assert!(is_primitive(&[vec![0.5, 0.5], vec![1.0, 0.0]]));
        // Periodic flip-flop.
        assert!(!is_primitive(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        // Reducible.
        assert!(!is_primitive(&[vec![1.0, 0.0], vec![0.5, 0.5]]));
    }

    #[test]
    fn markov_validation() {
        let net = tandem();
        let periodic = StateKind::Markov {
            matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            initial: StateId(0),
        };
        assert!(StateProcess::new(&net, 1, periodic, 0).is_err());
        let bad_row = StateKind::Markov {
            matrix: vec![vec![0.5, 0.4], vec![0.5, 0.5]],
            initial: StateId(0),
        };
        assert!(StateProcess::new(&net, 1, bad_row, 0).is_err());
        let ok = StateKind::Markov {
            matrix: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            initial: StateId(1),
        };
        let p = StateProcess::new(&net, 1, ok, 0).unwrap();
        let pi = p.stationary();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        assert_eq!(p.initial(1), 1);
    }

    #[test]
    fn iid_frequencies() {
        let net = tandem();
        let p = StateProcess::new(&net, 1, StateKind::Iid { probs: vec![0.7, 0.3] }, 9).unwrap();
        let n = 50_000;
        let rain = (0..n).filter(|&t| p.next(4, t, 0) == 1).count() as f64 / n as f64;
        assert!((rain - 0.3).abs() < 0.01, "{rain}");
    }

    #[test]
    fn fixed_state_and_unknown_id() {
        let net = tandem();
        let p = StateProcess::new(&net, 1, StateKind::Fixed { state: StateId(1) }, 0).unwrap();
        assert_eq!(p.initial(0), 1);
        assert_eq!(p.next(0, 10, 1), 1);
        assert!(StateProcess::new(&net, 1, StateKind::Fixed { state: StateId(5) }, 0).is_err());
    }
}
