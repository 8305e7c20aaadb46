//! Capacity-region membership and throughput multipliers via linear programs.
//!
//! Variables are a flow `f_m >= 0` per movement and, for each junction `j`
//! and state `z`, convex weights `θ_{j,z,p}` over phases. Constraints:
//!
//! * `Σ_p θ_{j,z,p} = 1` (convexity),
//! * `f_m <= Σ_z π_j(z) Σ_p θ_{j,z,p} ξ_j(p, m, z)` (service),
//! * `out_a - in_a = λ_a` for every non-exit link (conservation),
//! * optionally `f_m = r_m · out_a` for a fixed routing (turn ratios).
//!
//! The service region is a product of per-junction hulls, so only the
//! per-junction marginals of the state distribution matter.

use serde::Serialize;
use thiserror::Error;

use super::lp::{LinearProgram, LpError, LpOutcome, Relation, RESIDUAL_TOL};
use crate::network::{LinkId, Network};
use crate::sim::TurnRatios;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("invalid state distribution: {0}")]
    Distribution(String),
    #[error("invalid arrival vector: {0}")]
    Arrivals(String),
    #[error("direction must be nonnegative, supported on entry links and not all zero")]
    InvalidDirection,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Traffic-state distribution for the capacity computation.
#[derive(Debug, Clone, PartialEq)]
pub enum StateDistribution {
    /// One distribution per junction over its state list.
    PerJunction(Vec<Vec<f64>>),
    /// Joint distribution over state-index tuples (at most two junctions).
    Joint { states: Vec<Vec<usize>>, probs: Vec<f64> },
}

impl StateDistribution {
    /// Uniform over each junction's states.
    pub fn uniform(net: &Network) -> Self {
        StateDistribution::PerJunction(
            net.junctions()
                .iter()
                .map(|j| vec![1.0 / j.states.len() as f64; j.states.len()])
                .collect(),
        )
    }

    /// Per-junction marginals, validated against the network.
    pub fn marginals(&self, net: &Network) -> Result<Vec<Vec<f64>>, RegionError> {
        let nj = net.num_junctions();
        let sizes: Vec<usize> = net.junctions().iter().map(|j| j.states.len()).collect();
        let out = match self {
            StateDistribution::PerJunction(p) => p.clone(),
            StateDistribution::Joint { states, probs } => {
                if nj > 2 {
                    return Err(RegionError::Distribution(
                        "joint distributions are accepted for at most two junctions".into(),
                    ));
                }
                if states.len() != probs.len() {
                    return Err(RegionError::Distribution("states and probs differ in length".into()));
                }
                let mut m: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
                for (tuple, &p) in states.iter().zip(probs) {
                    if tuple.len() != nj || tuple.iter().zip(&sizes).any(|(z, n)| z >= n) {
                        return Err(RegionError::Distribution(format!("bad joint state {tuple:?}")));
                    }
                    for (j, &z) in tuple.iter().enumerate() {
                        m[j][z] += p;
                    }
                }
                m
            }
        };
        if out.len() != nj {
            return Err(RegionError::Distribution(format!("{} distributions for {nj} junctions", out.len())));
        }
        for (j, p) in out.iter().enumerate() {
            if p.len() != sizes[j] {
                return Err(RegionError::Distribution(format!(
                    "junction {j}: {} probabilities for {} states",
                    p.len(),
                    sizes[j]
                )));
            }
            if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(RegionError::Distribution(format!("junction {j}: not a probability vector")));
            }
        }
        Ok(out)
    }
}

/// Rate vectors over junction `j`'s movements, one per phase, in state `z`.
pub fn junction_rate_hull(net: &Network, j: usize, z: usize) -> Vec<Vec<f64>> {
    let junction = net.junction(j);
    (0..junction.phases.len())
        .map(|p| (0..junction.movements.len()).map(|m| net.rate_at(j, z, p, m)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowEntry {
    pub from: LinkId,
    pub to: LinkId,
    pub flow: f64,
    /// Average service rate granted by the weights.
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightEntry {
    pub junction: usize,
    pub state: usize,
    pub phase: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessRow {
    pub family: String,
    pub constraint: String,
    pub multiplier: f64,
}

/// Farkas combination of constraints proving infeasibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Constraint families with a nonzero multiplier, in first-seen order.
    pub families: Vec<String>,
    pub rows: Vec<WitnessRow>,
    /// Positive right-hand side of the combined inequality.
    pub gap: f64,
}

impl Witness {
    pub fn involves(&self, constraint: &str) -> bool {
        self.rows.iter().any(|r| r.constraint == constraint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCertificate {
    pub feasible: bool,
    pub lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<FlowEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl RegionCertificate {
    /// θ as `[junction][state][phase]`.
    pub fn theta(&self, net: &Network) -> Option<Vec<Vec<Vec<f64>>>> {
        let weights = self.weights.as_ref()?;
        let mut out: Vec<Vec<Vec<f64>>> = net
            .junctions()
            .iter()
            .map(|j| vec![vec![0.0; j.phases.len()]; j.states.len()])
            .collect();
        for w in weights {
            let p = net.phase_index(w.junction, crate::network::PhaseId(w.phase))?;
            out[w.junction][w.state][p] = w.weight;
        }
        Some(out)
    }
}

struct Model {
    lp: LinearProgram,
    labels: Vec<(String, String)>,
    /// Per junction, per state: first θ variable.
    theta_index: Vec<Vec<usize>>,
    rho: Option<usize>,
}

fn build(
    net: &Network,
    pi: &[Vec<f64>],
    lambda: &[f64],
    routing: Option<&TurnRatios>,
    multiplier: bool,
) -> Model {
    let nm = net.movements().len();
    let mut theta_index = Vec::new();
    let mut next = nm;
    for j in net.junctions() {
        let mut per_state = Vec::new();
        for _ in &j.states {
            per_state.push(next);
            next += j.phases.len();
        }
        theta_index.push(per_state);
    }
    let rho = multiplier.then(|| {
        next += 1;
        next - 1
    });
    let mut lp = LinearProgram::new(next);
    let mut labels = Vec::new();

    for (j, junction) in net.junctions().iter().enumerate() {
        for (z, &start) in theta_index[j].iter().enumerate() {
            let coeffs = (0..junction.phases.len()).map(|p| (start + p, 1.0)).collect();
            lp.add(coeffs, Relation::Eq, 1.0);
            labels.push(("convexity".to_string(), format!("convexity[j{j},z{z}]")));
        }
    }
    for (g, mv) in net.movements().iter().enumerate() {
        let j = mv.junction;
        let mut coeffs = vec![(g, 1.0)];
        for (z, &start) in theta_index[j].iter().enumerate() {
            for p in 0..net.junction(j).phases.len() {
                let r = pi[j][z] * net.rate_at(j, z, p, mv.local);
                if r != 0.0 {
                    coeffs.push((start + p, -r));
                }
            }
        }
        lp.add(coeffs, Relation::Le, 0.0);
        labels.push(("service".to_string(), format!("service[{},{}]", mv.from, mv.to)));
    }
    for link in net.links() {
        if link.exit {
            continue;
        }
        let a = link.id;
        let mut coeffs: Vec<(usize, f64)> = net.outgoing(a).iter().map(|&m| (m, 1.0)).collect();
        coeffs.extend(net.incoming(a).iter().map(|&m| (m, -1.0)));
        let rhs = match rho {
            Some(r) => {
                if lambda[a.index()] != 0.0 {
                    coeffs.push((r, -lambda[a.index()]));
                }
                0.0
            }
            None => lambda[a.index()],
        };
        lp.add(coeffs, Relation::Eq, rhs);
        labels.push(("conservation".to_string(), format!("conservation[{a}]")));
    }
    if let Some(ratios) = routing {
        for link in net.links() {
            let out = net.outgoing(link.id);
            if out.len() < 2 {
                continue;
            }
            for &m in out {
                let mut coeffs: Vec<(usize, f64)> = out.iter().map(|&k| (k, -ratios.fractions[m])).collect();
                for c in coeffs.iter_mut() {
                    if c.0 == m {
                        c.1 += 1.0;
                    }
                }
                lp.add(coeffs, Relation::Eq, 0.0);
                let mv = net.movements()[m];
                labels.push(("routing".to_string(), format!("routing[{},{}]", mv.from, mv.to)));
            }
        }
    }
    if let Some(r) = rho {
        lp.objective[r] = 1.0;
    }
    Model {
        lp,
        labels,
        theta_index,
        rho,
    }
}

fn certificate(net: &Network, pi: &[Vec<f64>], model: &Model, lambda: Vec<f64>, x: &[f64]) -> RegionCertificate {
    let mut weights = Vec::new();
    for (j, junction) in net.junctions().iter().enumerate() {
        for (z, &start) in model.theta_index[j].iter().enumerate() {
            for (p, phase) in junction.phases.iter().enumerate() {
                weights.push(WeightEntry {
                    junction: j,
                    state: z,
                    phase: phase.id.0,
                    weight: x[start + p],
                });
            }
        }
    }
    let flows = net
        .movements()
        .iter()
        .enumerate()
        .map(|(g, mv)| {
            let j = mv.junction;
            let mut service = 0.0;
            for (z, &start) in model.theta_index[j].iter().enumerate() {
                for p in 0..net.junction(j).phases.len() {
                    service += pi[j][z] * x[start + p] * net.rate_at(j, z, p, mv.local);
                }
            }
            FlowEntry {
                from: mv.from,
                to: mv.to,
                flow: x[g],
                service,
            }
        })
        .collect();
    RegionCertificate {
        feasible: true,
        lambda,
        flows: Some(flows),
        weights: Some(weights),
        max_residual: Some(model.lp.max_residual(x)),
        witness: None,
    }
}

fn witness(model: &Model, multipliers: &[f64], gap: f64) -> Witness {
    let scale = multipliers.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut families: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for ((family, name), &u) in model.labels.iter().zip(multipliers) {
        if u.abs() > 1e-9 * scale.max(1.0) {
            if !families.contains(family) {
                families.push(family.clone());
            }
            rows.push(WitnessRow {
                family: family.clone(),
                constraint: name.clone(),
                multiplier: u,
            });
        }
    }
    Witness { families, rows, gap }
}

fn check_lambda(net: &Network, lambda: &[f64]) -> Result<(), RegionError> {
    if lambda.len() != net.num_links() {
        return Err(RegionError::Arrivals(format!(
            "{} entries for {} links",
            lambda.len(),
            net.num_links()
        )));
    }
    for (l, &v) in net.links().iter().zip(lambda) {
        if !(v.is_finite() && v >= 0.0) {
            return Err(RegionError::Arrivals(format!("link {}: rate {v}", l.id)));
        }
        if v > 0.0 && !l.entry {
            return Err(RegionError::Arrivals(format!("link {} is not an entry link", l.id)));
        }
    }
    Ok(())
}

/// Is the per-link arrival-rate vector `lambda` inside the capacity region?
///
/// With `routing`, flows must also follow the given turn ratios.
pub fn capacity_feasible_routed(
    net: &Network,
    pi: &StateDistribution,
    lambda: &[f64],
    routing: Option<&TurnRatios>,
) -> Result<RegionCertificate, RegionError> {
    check_lambda(net, lambda)?;
    let pi = pi.marginals(net)?;
    let model = build(net, &pi, lambda, routing, false);
    match model.lp.solve()? {
        LpOutcome::Optimal { x, .. } | LpOutcome::Unbounded { x } => {
            let cert = certificate(net, &pi, &model, lambda.to_vec(), &x);
            if cert.max_residual.unwrap_or(0.0) > RESIDUAL_TOL {
                return Err(LpError::Numerical("certificate residual above tolerance".into()).into());
            }
            Ok(cert)
        }
        LpOutcome::Infeasible { multipliers, gap } => Ok(RegionCertificate {
            feasible: false,
            lambda: lambda.to_vec(),
            flows: None,
            weights: None,
            max_residual: None,
            witness: Some(witness(&model, &multipliers, gap)),
        }),
    }
}

/// [`capacity_feasible_routed`] without routing constraints.
pub fn capacity_feasible(
    net: &Network,
    pi: &StateDistribution,
    lambda: &[f64],
) -> Result<RegionCertificate, RegionError> {
    capacity_feasible_routed(net, pi, lambda, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThroughputBound {
    /// Largest multiplier, with the certificate at that load.
    Finite { rho: f64, certificate: RegionCertificate },
    /// Every multiple of the direction is serviceable.
    Unbounded,
}

impl ThroughputBound {
    pub fn rho(&self) -> f64 {
        match self {
            ThroughputBound::Finite { rho, .. } => *rho,
            ThroughputBound::Unbounded => f64::INFINITY,
        }
    }
}

/// Largest `ρ` with `ρ · direction` in the capacity region.
pub fn max_throughput_multiplier_routed(
    net: &Network,
    pi: &StateDistribution,
    direction: &[f64],
    routing: Option<&TurnRatios>,
) -> Result<ThroughputBound, RegionError> {
    check_lambda(net, direction).map_err(|_| RegionError::InvalidDirection)?;
    if direction.iter().all(|&v| v == 0.0) {
        return Err(RegionError::InvalidDirection);
    }
    let pi = pi.marginals(net)?;
    let model = build(net, &pi, direction, routing, true);
    let r = model.rho.expect("multiplier model");
    match model.lp.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let rho = x[r];
            let lambda: Vec<f64> = direction.iter().map(|d| d * rho).collect();
            let cert = certificate(net, &pi, &model, lambda, &x);
            Ok(ThroughputBound::Finite { rho, certificate: cert })
        }
        LpOutcome::Unbounded { .. } => Ok(ThroughputBound::Unbounded),
        LpOutcome::Infeasible { .. } => Err(LpError::Numerical("ρ = 0 should always be feasible".into()).into()),
    }
}

pub fn max_throughput_multiplier(
    net: &Network,
    pi: &StateDistribution,
    direction: &[f64],
) -> Result<ThroughputBound, RegionError> {
    max_throughput_multiplier_routed(net, pi, direction, None)
}
