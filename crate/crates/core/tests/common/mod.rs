#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bpsignal::analysis::{
    max_throughput_multiplier_routed, Binning, DriftAccumulator, LyapunovSeries, StabilityAccumulator,
    StabilityReport, StateDistribution,
};
use bpsignal::control::ControllerKind;
use bpsignal::network::Network;
use bpsignal::sim::{Scenario, Simulation};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load_net(name: &str) -> Network {
    bpsignal::network::load_network(&std::fs::read(scenario_dir().join(name)).unwrap()).unwrap()
}

/// Boundary multiplier of the scenario's mean arrival vector under its own
/// turn ratios and stationary state distribution.
pub fn boundary(sc: &Scenario) -> f64 {
    let pi = StateDistribution::PerJunction(sc.state_distribution());
    max_throughput_multiplier_routed(&sc.network, &pi, &sc.mean_arrival_rates(), Some(&sc.turn_ratios))
        .unwrap()
        .rho()
}

pub struct LongRun {
    pub stability: StabilityReport,
    pub drift: LyapunovSeries,
    pub final_total: f64,
}

/// Backpressure run with streaming statistics at threshold `v`.
pub fn long_run(sc: &Scenario, v: f64, drift_bins: usize) -> LongRun {
    let mut ctrl = sc.build_controller(ControllerKind::Backpressure).unwrap();
    let mut sim = Simulation::new(sc);
    let horizon = sc.horizon();
    let mut stab = StabilityAccumulator::new(&[v], sc.network.num_links(), horizon);
    let mut drift = DriftAccumulator::new();
    stab.observe(&sim.state().queues);
    drift.observe(&sim.state().queues);
    let mut final_total = 0.0;
    sim.run_with(ctrl.as_mut(), |rec| {
        if rec.t + 1 < horizon {
            stab.observe(&rec.queues_after);
        }
        drift.observe(&rec.queues_after);
        final_total = rec.queues_after.iter().sum();
    })
    .unwrap();
    LongRun {
        stability: stab.finish(),
        drift: drift.finish(drift_bins, Binning::Quantile),
        final_total,
    }
}

/// Random single junction as a network JSON value: up to 8 phases, up to 12
/// movements, dyadic rates so pressures are exact.
pub fn random_junction(rng: &mut ChaCha8Rng) -> Value {
    let n_in = rng.random_range(1..=4usize);
    let n_out = rng.random_range(1..=4usize);
    let mut links = Vec::new();
    for a in 0..n_in + n_out {
        let is_in = a < n_in;
        links.push(json!({
            "id": a,
            "capacity": if rng.random_bool(0.5) { Value::Null } else { json!(rng.random_range(10..100)) },
            "entry": is_in,
            "exit": !is_in && rng.random_bool(0.5),
        }));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n_in).flat_map(|i| (n_in..n_in + n_out).map(move |o| (i, o))).collect();
    pairs.shuffle(rng);
    pairs.truncate(rng.random_range(1..=pairs.len().min(12)));
    let n_mov = pairs.len();
    let n_phases = rng.random_range(1..=8usize);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_phases];
    for m in 0..n_mov {
        members[rng.random_range(0..n_phases)].push(m);
        for p in members.iter_mut() {
            if rng.random_bool(0.2) && !p.contains(&m) {
                p.push(m);
            }
        }
    }
    for p in 0..n_phases {
        if members[p].is_empty() {
            members[p].push(rng.random_range(0..n_mov));
        }
        members[p].sort();
    }
    let mut ids: Vec<u32> = (1..=n_phases as u32 + 3).collect();
    ids.shuffle(rng);
    let n_states = rng.random_range(1..=3usize);
    let mut rates = Vec::new();
    for (p, ms) in members.iter().enumerate() {
        for &m in ms {
            for z in 0..n_states {
                if rng.random_bool(0.5) {
                    rates.push(json!({"phase": ids[p], "movement": m, "state": z, "rate": rng.random_range(0..=12) as f64 / 4.0}));
                }
            }
        }
    }
    json!({
        "links": links,
        "junctions": [{
            "id": 0,
            "movements": pairs.iter().map(|&(f, t)| json!([f, t])).collect::<Vec<_>>(),
            "phases": members.iter().enumerate().map(|(p, ms)| json!({"id": ids[p], "movements": ms})).collect::<Vec<_>>(),
            "states": (0..n_states).collect::<Vec<_>>(),
            "rates": rates,
            "default_saturation": rng.random_range(1..=8) as f64 / 4.0,
        }]
    })
}

/// Random multi-junction scenario document with finite interior capacities.
pub fn random_network_scenario(rng: &mut ChaCha8Rng, n_junctions: usize, horizon: u64, seed: u64) -> Value {
    let mut links = Vec::new();
    let mut ins: Vec<Vec<usize>> = vec![Vec::new(); n_junctions];
    let mut outs: Vec<Vec<usize>> = vec![Vec::new(); n_junctions];
    let mut entries = Vec::new();
    let add = |links: &mut Vec<Value>, cap: Value, entry: bool, exit: bool| {
        let id = links.len();
        links.push(json!({"id": id, "capacity": cap, "entry": entry, "exit": exit}));
        id
    };
    for j in 0..n_junctions {
        for _ in 0..rng.random_range(1..=2) {
            let cap = if rng.random_bool(0.5) { Value::Null } else { json!(rng.random_range(30..60)) };
            let a = add(&mut links, cap, true, false);
            ins[j].push(a);
            entries.push(a);
        }
        let x = add(&mut links, Value::Null, false, true);
        outs[j].push(x);
    }
    for j in 0..n_junctions {
        for _ in 0..rng.random_range(1..=2) {
            let mut k = rng.random_range(0..n_junctions - 1);
            if k >= j {
                k += 1;
            }
            let a = add(&mut links, json!(rng.random_range(15..40)), false, false);
            outs[j].push(a);
            ins[k].push(a);
        }
    }
    let mut junctions = Vec::new();
    let mut states = Vec::new();
    for j in 0..n_junctions {
        let mut movements = Vec::new();
        for &i in &ins[j] {
            let mut o = outs[j].clone();
            o.shuffle(rng);
            for &t in o.iter().take(rng.random_range(1..=o.len().min(3))) {
                movements.push((i, t));
            }
        }
        let n_phases = rng.random_range(2..=4usize).min(movements.len());
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_phases];
        for m in 0..movements.len() {
            members[m % n_phases].push(m);
        }
        for p in members.iter_mut() {
            if rng.random_bool(0.3) {
                let extra = rng.random_range(0..movements.len());
                if !p.contains(&extra) {
                    p.push(extra);
                    p.sort();
                }
            }
        }
        let n_states = rng.random_range(1..=2usize);
        let mut rates = Vec::new();
        if n_states == 2 {
            for (p, ms) in members.iter().enumerate() {
                for &m in ms {
                    rates.push(json!({"phase": p + 1, "movement": m, "state": 1, "rate": rng.random_range(0.2..1.0)}));
                }
            }
            let w = rng.random_range(0.5..0.9);
            states.push(json!({"junction": j, "process": {"kind": "iid", "probs": [w, 1.0 - w]}}));
        }
        junctions.push(json!({
            "id": j,
            "movements": movements.iter().map(|&(f, t)| json!([f, t])).collect::<Vec<_>>(),
            "phases": members.iter().enumerate().map(|(p, ms)| json!({"id": p + 1, "movements": ms})).collect::<Vec<_>>(),
            "states": (0..n_states).collect::<Vec<_>>(),
            "rates": rates,
            "default_saturation": rng.random_range(0.8..2.0),
        }));
    }
    let arrivals: Vec<Value> = entries
        .iter()
        .map(|&a| {
            let p1 = rng.random_range(0.1..0.4);
            let p2 = rng.random_range(0.0..0.15);
            json!({"link": a, "process": {"kind": "iid_bounded", "pmf": [1.0 - p1 - p2, p1, p2], "unit": 1.0}})
        })
        .collect();
    json!({
        "network": {"links": links, "junctions": junctions},
        "horizon": horizon,
        "seed": seed,
        "arrivals": arrivals,
        "states": states,
    })
}

pub fn scenario_from_value(v: &Value) -> Scenario {
    Scenario::from_json(serde_json::to_string(v).unwrap().as_bytes(), Path::new("."), "generated").unwrap()
}
