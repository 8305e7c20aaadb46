//! Acceptance suite. Each test checks one criterion and writes a single
//! `criterion N: PASS|FAIL ...` line to stderr (outside the test harness's
//! output capture) before asserting.

mod common;

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bpsignal::analysis::{capacity_feasible, empirical_multiplier, Criterion, SearchRange, StateDistribution};
use bpsignal::control::backpressure::{phase_pressure, select_phase, LocalObservation};
use bpsignal::control::{ControllerKind, TiePolicy};
use bpsignal::network::{load_network, Network};
use bpsignal::sim::{discharge, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;

fn report(n: u32, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

// ---------------------------------------------------------------- 1

/// Pressure computed straight from the network definition, independent of
/// the controller's rate lookup.
fn oracle_pressures(net: &Network, queues: &[f64], state: usize) -> Vec<f64> {
    let junction = net.junction(0);
    let state_id = junction.states[state].id;
    junction
        .phases
        .iter()
        .map(|phase| {
            phase
                .movements
                .iter()
                .map(|&m| {
                    let mv = junction.movements[m];
                    let rate = junction
                        .rates
                        .iter()
                        .find(|r| r.phase == phase.id && r.movement == m && r.state == state_id)
                        .map_or(junction.default_saturation, |r| r.rate);
                    let down = if net.link(mv.to).exit { 0.0 } else { queues[mv.to.index()] };
                    (queues[mv.from.index()] - down) * rate
                })
                .sum()
        })
        .collect()
}

#[test]
fn criterion_1_phase_selection_matches_exhaustive_maximum() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
    let mut failures = Vec::new();
    let mut ties = 0;
    for case in 0..500 {
        let net = load_network(common::random_junction(&mut rng).to_string().as_bytes()).unwrap();
        let queues: Vec<f64> = (0..net.num_links()).map(|_| rng.random_range(0..=30) as f64).collect();
        let state = rng.random_range(0..net.junction(0).states.len());
        let obs = LocalObservation::gather(&net, 0, &queues, state);

        let oracle = oracle_pressures(&net, &queues, state);
        let best = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle_ties: BTreeSet<usize> = (0..oracle.len()).filter(|&p| oracle[p] == best).collect();
        let impl_scores: Vec<f64> = (0..oracle.len()).map(|p| phase_pressure(&net, &obs, p)).collect();
        let impl_best = impl_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let impl_ties: BTreeSet<usize> = (0..oracle.len()).filter(|&p| impl_scores[p] == impl_best).collect();
        if oracle_ties.len() > 1 {
            ties += 1;
        }

        let chosen = select_phase(&net, &obs, TiePolicy::LowestPhaseId, None);
        let phases = &net.junction(0).phases;
        let lowest = *oracle_ties.iter().min_by_key(|&&p| phases[p].id).unwrap();
        let mut random_choices = BTreeSet::new();
        for seed in 0..40 {
            random_choices.insert(select_phase(&net, &obs, TiePolicy::SeededRandom { seed }, None));
        }
        if oracle[chosen] != best || impl_ties != oracle_ties || chosen != lowest || !random_choices.is_subset(&oracle_ties)
        {
            failures.push(case);
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(5);
    report(
        1,
        ok,
        &format!("500 junctions, {ties} with tied maxima, mismatches {failures:?}, {elapsed:.2?} (limit 5s)"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 2

/// `R (1 - e^{-x/R})`: power series for small `x/R`, direct form otherwise.
fn discharge_oracle(x: f64, r: f64) -> f64 {
    if r <= 0.0 || x <= 0.0 {
        return 0.0;
    }
    let u = x / r;
    if u < 0.1 {
        // 1 - e^{-u} = u - u^2/2! + u^3/3! - ...
        let (mut term, mut sum) = (u, 0.0);
        for k in 1..30 {
            sum += term;
            term *= -u / (k + 1) as f64;
        }
        r * sum
    } else {
        r * (1.0 - (-u).exp())
    }
}

#[test]
fn criterion_2_discharge_matches_direct_evaluation() {
    let axis: Vec<f64> = std::iter::once(0.0)
        .chain((0..99).map(|k| 10f64.powf(-8.0 + 12.0 * k as f64 / 98.0)))
        .collect();
    let mut worst = 0.0f64;
    let mut bound_ok = true;
    let mut points = 0;
    for &x in &axis {
        for &r in &axis {
            points += 1;
            let got = discharge(x, r);
            let want = discharge_oracle(x, r);
            bound_ok &= got <= r.min(x) && got >= 0.0;
            let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
            worst = worst.max(rel);
        }
    }
    let limit_ok = discharge(5.0, 0.0) == 0.0 && discharge(5.0, 1e-300) <= 1e-300 && discharge(0.0, 3.0) == 0.0;
    let ok = points == 10_000 && worst <= 1e-12 && bound_ok && limit_ok;
    report(
        2,
        ok,
        &format!("{points} points, max relative error {worst:.2e} (limit 1e-12), bound holds {bound_ok}, R->0 limit {limit_ok}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_vehicle_conservation_on_random_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    let doc = random_network_scenario(&mut rng, 14, 10_000, 77);
    let sc = scenario_from_value(&doc);
    let net = &sc.network;
    assert_eq!(net.num_junctions(), 14);
    let mut ctrl = sc.build_controller(ControllerKind::Backpressure).unwrap();
    let mut sim = Simulation::new(&sc);
    let (mut worst_slot, mut worst_link) = (0.0f64, 0.0f64);
    let mut prev_q = sim.state().queues.clone();
    let mut prev_backlog = sim.state().backlog.clone();
    let (mut generated, mut exited, mut blocked) = (0.0, 0.0, 0.0);
    for _ in 0..sc.horizon() {
        let rec = sim.advance(ctrl.as_mut()).unwrap();
        for a in 0..net.num_links() {
            let link = &net.links()[a];
            let inflow = rec.inflow(net, link.id);
            let kept = if link.exit { 0.0 } else { inflow };
            let expect = prev_q[a] + rec.admitted[a] + kept - rec.outflow(net, link.id);
            worst_link = worst_link.max((rec.queues_after[a] - expect).abs());
            // Arrivals are either admitted or still waiting outside.
            let origin = prev_backlog[a] + rec.generated[a] - rec.admitted[a] - rec.backlog[a];
            worst_link = worst_link.max(origin.abs());
        }
        let exits: f64 = (0..net.num_links())
            .filter(|&a| net.links()[a].exit)
            .map(|a| rec.inflow(net, net.links()[a].id))
            .sum();
        let before: f64 = prev_q.iter().sum::<f64>() + prev_backlog.iter().sum::<f64>();
        let after: f64 = rec.queues_after.iter().sum::<f64>() + rec.backlog.iter().sum::<f64>();
        let gen: f64 = rec.generated.iter().sum();
        worst_slot = worst_slot.max((after - (before + gen - rec.exited)).abs()).max((exits - rec.exited).abs());
        generated += gen;
        exited += rec.exited;
        blocked += rec.blocked;
        prev_q = rec.queues_after.clone();
        prev_backlog = rec.backlog.clone();
    }
    let stock: f64 = prev_q.iter().sum::<f64>() + prev_backlog.iter().sum::<f64>();
    let cumulative = (generated - exited - stock).abs();
    let ok = worst_slot <= 1e-6 && worst_link <= 1e-6 && cumulative <= 1e-6;
    report(
        3,
        ok,
        &format!(
            "14 junctions, {} links, 10^4 slots: per-slot {worst_slot:.2e}, per-link {worst_link:.2e}, cumulative {cumulative:.2e} (limit 1e-6); generated {generated:.0}, exited {exited:.0}, spillback-limited {blocked:.1}",
            net.num_links()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 4

/// Time-share brute force for the two-phase conflict junction.
fn conflict2_grid(l1: f64, l2: f64) -> bool {
    (0..=100).any(|k| {
        let th = k as f64 / 100.0;
        l1 <= th + 1e-12 && l2 <= 1.0 - th + 1e-12
    })
}

/// Time-share brute force for the tandem: one weight at the first junction,
/// one per traffic state at the second (clear rate 1, rain rate 0.6, rain
/// probability 0.3). Link A's flow continues through M to the second junction.
fn tandem_grid(la: f64, lb: f64, lc: f64) -> bool {
    let first = (0..=100).any(|k| {
        let th = k as f64 / 100.0;
        la <= th + 1e-12 && lb <= 1.0 - th + 1e-12
    });
    let second = (0..=100).any(|c| {
        (0..=100).any(|r| {
            let (tc, tr) = (c as f64 / 100.0, r as f64 / 100.0);
            let serve_m = 0.7 * tc + 0.3 * 0.6 * tr;
            let serve_c = 0.7 * (1.0 - tc) + 0.3 * 0.6 * (1.0 - tr);
            la <= serve_m + 1e-12 && lc <= serve_c + 1e-12
        })
    });
    first && second
}

#[test]
fn criterion_4_capacity_lp_matches_time_share_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let conflict = load_net("conflict2.json");
    let tandem = load_net("tandem.json");
    let fixed = StateDistribution::PerJunction(vec![vec![1.0]]);
    let tandem_pi = StateDistribution::PerJunction(vec![vec![1.0], vec![0.7, 0.3]]);
    let (mut outside, mut banded, mut disagreements) = (0, 0, Vec::new());
    let (mut feasible, mut infeasible) = (0, 0);
    for i in 0..200 {
        let (l1, l2) = (rng.random_range(0.0..0.8), rng.random_range(0.0..0.8));
        let lp = capacity_feasible(&conflict, &fixed, &[l1, l2, 0.0, 0.0]).unwrap().feasible;
        let grid = conflict2_grid(l1, l2);
        let margin = (l1 + l2 - 1.0).abs();
        if margin < 0.01 {
            banded += 1;
        } else {
            outside += 1;
            if lp != grid {
                disagreements.push(format!("conflict2 #{i} ({l1:.4},{l2:.4})"));
            }
        }
        if lp {
            feasible += 1
        } else {
            infeasible += 1
        }
    }
    for i in 0..200 {
        let (la, lb, lc) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
        let lp = capacity_feasible(&tandem, &tandem_pi, &[la, lb, 0.0, 0.0, 0.0, lc, 0.0]).unwrap().feasible;
        let grid = tandem_grid(la, lb, lc);
        // Hand-derived boundary: la + lb <= 1 and la + lc <= 0.88.
        let margin = (la + lb - 1.0).max(la + lc - 0.88).abs();
        if margin < 0.01 {
            banded += 1;
        } else {
            outside += 1;
            if lp != grid {
                disagreements.push(format!("tandem #{i} ({la:.4},{lb:.4},{lc:.4})"));
            }
        }
        if lp {
            feasible += 1
        } else {
            infeasible += 1
        }
    }
    let ok = disagreements.is_empty() && feasible > 0 && infeasible > 0;
    report(
        4,
        ok,
        &format!(
            "400 points ({feasible} feasible, {infeasible} infeasible), {outside} outside the 0.01 band, {banded} inside, disagreements {disagreements:?}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 5 and 7

const STABILITY_SCENARIOS: [&str; 3] = ["conflict2_stability.json", "tandem_stability.json", "crossroads_stability.json"];
const SEEDS: u64 = 10;

struct SeedResult {
    scenario: &'static str,
    seed: u64,
    rho_star: f64,
    v: f64,
    inside: LongRun,
    outside_final: f64,
}

fn stability_runs() -> &'static Vec<SeedResult> {
    static RUNS: OnceLock<Vec<SeedResult>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let jobs: Vec<(&'static str, u64)> = STABILITY_SCENARIOS
            .iter()
            .flat_map(|&s| (0..SEEDS).map(move |seed| (s, seed)))
            .collect();
        jobs.par_iter()
            .map(|&(name, seed)| {
                let base = load(name).with_seed(seed);
                let rho_star = boundary(&base);
                let v = 10.0 * base.network.num_links() as f64;
                let inside = long_run(&base.scaled(0.95 * rho_star), v, 4);
                let outside = long_run(&base.scaled(1.1 * rho_star), v, 4);
                SeedResult {
                    scenario: name,
                    seed,
                    rho_star,
                    v,
                    inside,
                    outside_final: outside.final_total,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_5_backpressure_stable_inside_unstable_outside() {
    let runs = stability_runs();
    let mut bad = Vec::new();
    let mut worst_stat = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for r in runs {
        let stat = r.inside.stability.worst[0];
        worst_stat = worst_stat.max(stat);
        let ratio = r.outside_final / r.inside.final_total.max(f64::MIN_POSITIVE);
        min_ratio = min_ratio.min(ratio);
        if !(stat < 0.01) || !(r.outside_final > 10.0 * r.inside.final_total) || r.inside.stability.slots != 100_000 {
            bad.push(format!("{} seed {}: stat {stat:.4}, final {:.1} vs {:.1}", r.scenario, r.seed, r.inside.final_total, r.outside_final));
        }
    }
    let boundaries: Vec<String> = STABILITY_SCENARIOS
        .iter()
        .map(|s| {
            let r = runs.iter().find(|r| r.scenario == *s).unwrap();
            format!("{s} rho*={:.6} V={}", r.rho_star, r.v)
        })
        .collect();
    let ok = bad.is_empty() && runs.len() == 30;
    report(
        5,
        ok,
        &format!(
            "3 networks x 10 seeds x 10^5 slots [{}]: worst statistic at 0.95 {worst_stat:.5} (limit 0.01), smallest final-queue ratio 1.1 vs 0.95 {min_ratio:.1} (limit 10), failures {bad:?}",
            boundaries.join("; ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_drift_negative_above_knee() {
    let runs = stability_runs();
    let mut bad = Vec::new();
    let mut max_drift = f64::NEG_INFINITY;
    for r in runs {
        let above: Vec<f64> = r.inside.drift.bins_above_knee().map(|b| b.mean_drift).collect();
        if r.inside.drift.knee.is_none() || above.is_empty() || above.iter().any(|&d| d >= 0.0) {
            bad.push(format!("{} seed {}: knee {:?}, drifts {above:?}", r.scenario, r.seed, r.inside.drift.knee));
        }
        max_drift = above.iter().copied().fold(max_drift, f64::max);
    }
    let ok = bad.is_empty();
    report(
        7,
        ok,
        &format!("30 within-capacity runs, quartile bins: largest drift above the knee {max_drift:.4} (must be < 0), failures {bad:?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_backpressure_beats_baselines_on_single_junction() {
    let start = Instant::now();
    let sc = load("crossroads.json");
    let range = SearchRange {
        lo: 0.05,
        hi: 3.0,
        step: 0.05,
    };
    let est: Vec<_> = ControllerKind::ALL
        .par_iter()
        .map(|&k| empirical_multiplier(&sc, k, Criterion::NoCapacityBreach, range).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let rho = |k: ControllerKind| est.iter().find(|e| e.controller == k).unwrap().rho;
    let (bp, ft, scats) = (rho(ControllerKind::Backpressure), rho(ControllerKind::FixedTime), rho(ControllerKind::Scats));
    let tol = 1e-9;
    let ok = bp >= scats + 0.1 - tol && bp >= ft + 0.1 - tol && elapsed < Duration::from_secs(120);
    report(
        6,
        ok,
        &format!("multipliers backpressure {bp:.2}, fixed-time {ft:.2}, scats {scats:.2} (need backpressure >= each + 0.10), {elapsed:.2?} (limit 120s)"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_8_manifest_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let crossroads = scenario_dir().join("crossroads.json");
    let tandem = scenario_dir().join("tandem_stability.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["--scenario".into(), crossroads.display().to_string()]),
        (
            "simulate",
            vec![
                "--scenario".into(),
                tandem.display().to_string(),
                "--horizon".into(),
                "5000".into(),
                "--seed".into(),
                "9".into(),
            ],
        ),
        (
            "compare",
            vec!["--scenario".into(), crossroads.display().to_string(), "--scale".into(), "1.1".into()],
        ),
        (
            "sweep",
            vec![
                "--scenario".into(),
                crossroads.display().to_string(),
                "--lo".into(),
                "0.8".into(),
                "--hi".into(),
                "1.4".into(),
            ],
        ),
    ];
    let mut checked = 0;
    let mut bad = Vec::new();
    for (i, (cmd, args)) in runs.iter().enumerate() {
        let first = tmp.path().join(format!("run{i}"));
        let second = tmp.path().join(format!("replay{i}"));
        let mut argv = vec!["bpsignal".to_string(), cmd.to_string()];
        argv.extend(args.iter().cloned());
        argv.extend(["--out".into(), first.display().to_string()]);
        assert_eq!(bpsignal::cli::run_command(&argv), 0, "{argv:?}");
        let replay = [
            "bpsignal".to_string(),
            "replay".into(),
            "--manifest".into(),
            first.join("manifest.json").display().to_string(),
            "--out".into(),
            second.display().to_string(),
        ];
        let code = bpsignal::cli::run_command(replay);
        let a = dir_files(&first);
        let b = dir_files(&second);
        checked += a.len();
        if code != 0 || a != b || !a.iter().any(|(n, _)| n.ends_with(".svg")) {
            bad.push(format!("{cmd} #{i}: exit {code}"));
        }
    }
    let ok = bad.is_empty();
    report(
        8,
        ok,
        &format!("4 manifests (simulate x2, compare, sweep), {checked} files compared byte for byte, failures {bad:?}"),
    );
    assert!(ok);
}
