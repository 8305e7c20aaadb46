use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Parser;
use rayon::prelude::*;

use super::{
    CapacityArgs, Cli, Command, CompareArgs, CriterionArg, Failure, Metric, ReplayArgs, SimulateArgs, SweepArgs,
};
use crate::analysis::{
    capacity_feasible_routed, drift_estimate, empirical_multiplier, max_throughput_multiplier_routed,
    stability_statistic, Binning, Criterion, SearchRange, StateDistribution, ThroughputBound,
};
use crate::error::ConfigError;
use crate::network::{load_network, Network};
use crate::report::{self, Manifest};
use crate::sim::{self, Scenario, ScenarioFile, TurnRatios};

/// Files produced by one command, plus the manifest that reproduces them.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub manifest: Manifest,
    /// Human-readable result printed to stdout.
    pub summary: String,
}

pub(super) fn dispatch(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(SimulateArgs { scenario, out, .. })
        | Command::Sweep(SweepArgs { scenario, out, .. })
        | Command::Compare(CompareArgs { scenario, out, .. }) => {
            let sc = Scenario::load(scenario)?;
            let arts = execute(cmd, &sc)?;
            report::write_artifacts(&out.out, &arts.files, &arts.manifest)?;
            print!("{}", arts.summary);
            println!("wrote {} files to {}", arts.files.len() + 1, out.out.display());
            Ok(())
        }
        Command::Capacity(args) => capacity(args),
        Command::Replay(args) => {
            let (out, n) = replay(args)?;
            println!("replay: {n} artifacts byte-identical, written to {}", out.display());
            Ok(())
        }
    }
}

/// Runs a scenario-based command (`simulate`, `sweep`, `compare`) in memory.
pub fn execute(cmd: &Command, sc: &Scenario) -> Result<Artifacts, Failure> {
    match cmd {
        Command::Simulate(a) => simulate(a, sc),
        Command::Sweep(a) => sweep(a, sc),
        Command::Compare(a) => compare(a, sc),
        _ => Err(Failure::Config(anyhow!("only simulate, sweep and compare produce artifacts"))),
    }
}

fn check_scale(scale: f64) -> Result<(), ConfigError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(format!("scale must be positive, got {scale}")))
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn simulate(a: &SimulateArgs, base: &Scenario) -> Result<Artifacts, Failure> {
    check_scale(a.scale)?;
    if a.bins == 0 {
        return Err(ConfigError::invalid("bins must be at least 1").into());
    }
    let kind = a.controller.unwrap_or(base.controller_kind());
    let seed = a.seed.unwrap_or(base.seed());
    let horizon = a.horizon.unwrap_or(base.horizon());
    let sc = base.with_controller(kind).with_seed(seed).with_horizon(horizon).scaled(a.scale);
    let n = sc.network.num_links();
    let mut thresholds = if a.thresholds.is_empty() {
        vec![10.0, 10.0 * n as f64, 100.0, 1000.0]
    } else {
        a.thresholds.clone()
    };
    if thresholds.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ConfigError::invalid("thresholds must be finite and nonnegative").into());
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let trace = sim::run(&sc)?;
    let stability = stability_statistic(&trace, &thresholds);
    let drift = drift_estimate(&trace, a.bins, Binning::Quantile);
    let mut files = BTreeMap::new();
    files.insert("trace.csv".to_string(), report::trace_csv(&trace, &sc.network));
    files.insert(
        "queues-per-link.svg".to_string(),
        report::queues_per_link_svg(&trace, &sc.network)?.into_bytes(),
    );
    files.insert("stability.csv".to_string(), report::stability_csv(&stability));
    files.insert("drift.csv".to_string(), report::drift_csv(&drift));

    let args = vec![
        "--controller".into(),
        kind.to_string(),
        "--seed".into(),
        seed.to_string(),
        "--horizon".into(),
        horizon.to_string(),
        "--scale".into(),
        a.scale.to_string(),
        "--thresholds".into(),
        join(&thresholds),
        "--bins".into(),
        a.bins.to_string(),
    ];
    let manifest = Manifest::new("simulate", args, seed, &base.to_json(), &files);
    let summary_row = report::summarize(kind.as_str(), &trace, &sc.network);
    let mut summary = format!(
        "simulate: {horizon} slots, controller {kind}, max queue {:.3}, mean queue {:.3}, vehicles exited {:.3}\n",
        summary_row.max_queue, summary_row.mean_queue, summary_row.exited
    );
    for (v, w) in stability.thresholds.iter().zip(&stability.worst) {
        summary.push_str(&format!("stability statistic at V={v}: {w:.6}\n"));
    }
    Ok(Artifacts { files, manifest, summary })
}

fn sweep(a: &SweepArgs, sc: &Scenario) -> Result<Artifacts, Failure> {
    let range = SearchRange {
        lo: a.lo,
        hi: a.hi,
        step: a.step,
    };
    range.validate()?;
    if a.controllers.is_empty() {
        return Err(ConfigError::invalid("no controllers given").into());
    }
    let v = a.v.unwrap_or(10.0 * sc.network.num_links() as f64);
    let criterion = match a.criterion {
        CriterionArg::NoBreach => Criterion::NoCapacityBreach,
        CriterionArg::Stability => Criterion::Stability { v, tau: a.tau },
    };
    let estimates = a
        .controllers
        .par_iter()
        .map(|&k| empirical_multiplier(sc, k, criterion, range))
        .collect::<Result<Vec<_>, _>>()?;

    let mut files = BTreeMap::new();
    files.insert("sweep.csv".to_string(), report::sweep_csv(&estimates));
    files.insert(
        "sweep-multiplier-bar.svg".to_string(),
        report::sweep_multiplier_svg(&estimates)?.into_bytes(),
    );
    let criterion_name = match a.criterion {
        CriterionArg::NoBreach => "no-breach",
        CriterionArg::Stability => "stability",
    };
    let args = vec![
        "--controllers".into(),
        join(&a.controllers),
        "--lo".into(),
        a.lo.to_string(),
        "--hi".into(),
        a.hi.to_string(),
        "--step".into(),
        a.step.to_string(),
        "--criterion".into(),
        criterion_name.into(),
        "--v".into(),
        v.to_string(),
        "--tau".into(),
        a.tau.to_string(),
    ];
    let manifest = Manifest::new("sweep", args, sc.seed(), &sc.to_json(), &files);
    let mut summary = String::new();
    for e in &estimates {
        let bound = if e.at_upper_bound { " (upper end of search range)" } else { "" };
        summary.push_str(&format!("{}: multiplier {:.2}{bound}\n", e.controller, e.rho));
    }
    Ok(Artifacts { files, manifest, summary })
}

fn compare(a: &CompareArgs, base: &Scenario) -> Result<Artifacts, Failure> {
    check_scale(a.scale)?;
    if a.controllers.is_empty() {
        return Err(ConfigError::invalid("no controllers given").into());
    }
    let sc = base.scaled(a.scale);
    let traces = a
        .controllers
        .par_iter()
        .map(|&k| sim::run(&sc.with_controller(k)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut files = BTreeMap::new();
    let rows: Vec<_> = a
        .controllers
        .iter()
        .zip(&traces)
        .map(|(k, t)| report::summarize(k.as_str(), t, &sc.network))
        .collect();
    files.insert("compare.csv".to_string(), report::compare_csv(&rows));
    for (k, t) in a.controllers.iter().zip(&traces) {
        files.insert(format!("trace-{k}.csv"), report::trace_csv(t, &sc.network));
    }
    let runs: Vec<(String, &sim::Trace)> = a.controllers.iter().map(|k| k.to_string()).zip(&traces).collect();
    let (max_svg, avg_svg) = report::queue_comparison_svgs(&runs, &sc.network)?;
    if a.metrics.contains(&Metric::Max) {
        files.insert("max-queue-comparison.svg".to_string(), max_svg.into_bytes());
    }
    if a.metrics.contains(&Metric::Avg) {
        files.insert("avg-queue-comparison.svg".to_string(), avg_svg.into_bytes());
    }
    let metrics: Vec<&str> = a
        .metrics
        .iter()
        .map(|m| match m {
            Metric::Max => "max",
            Metric::Avg => "avg",
        })
        .collect();
    let args = vec![
        "--controllers".into(),
        join(&a.controllers),
        "--metrics".into(),
        metrics.join(","),
        "--scale".into(),
        a.scale.to_string(),
    ];
    let manifest = Manifest::new("compare", args, base.seed(), &base.to_json(), &files);
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "{}: max queue {:.3}, mean queue {:.3}, exited {:.3}, slots with turned-away arrivals {}\n",
            r.controller, r.max_queue, r.mean_queue, r.exited, r.blocked_slots
        ));
    }
    Ok(Artifacts { files, manifest, summary })
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parses `0.8,0.2;1` into one distribution per junction.
fn parse_pi(text: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    text.split(';')
        .map(|part| {
            part.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| ConfigError::invalid(format!("bad number '{x}' in --pi")))
                })
                .collect()
        })
        .collect()
}

/// Entry-link values in id order, or one value per link.
fn expand_rates(net: &Network, values: &[f64], flag: &str) -> Result<Vec<f64>, ConfigError> {
    let entries: Vec<usize> = net.entry_links().map(|l| l.index()).collect();
    if values.len() == net.num_links() {
        Ok(values.to_vec())
    } else if values.len() == entries.len() {
        let mut full = vec![0.0; net.num_links()];
        for (&a, &v) in entries.iter().zip(values) {
            full[a] = v;
        }
        Ok(full)
    } else {
        Err(ConfigError::invalid(format!(
            "{flag} needs {} values (entry links) or {} (all links), got {}",
            entries.len(),
            net.num_links(),
            values.len()
        )))
    }
}

fn capacity(a: &CapacityArgs) -> Result<(), Failure> {
    let (net, default_pi, ratios): (Network, StateDistribution, Option<TurnRatios>) = match (&a.network, &a.scenario) {
        (Some(path), _) => {
            let net = load_network(&read(path)?).map_err(ConfigError::from)?;
            let pi = StateDistribution::uniform(&net);
            (net, pi, None)
        }
        (None, Some(path)) => {
            let sc = Scenario::load(path)?;
            let pi = StateDistribution::PerJunction(sc.state_distribution());
            (sc.network.clone(), pi, Some(sc.turn_ratios.clone()))
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let pi = match &a.pi {
        Some(text) => StateDistribution::PerJunction(parse_pi(text)?),
        None => default_pi,
    };
    let routing = if a.routed { ratios.as_ref() } else { None };
    let out = &a.out.out;
    if let Some(lambda) = &a.lambda {
        let lambda = expand_rates(&net, lambda, "--lambda")?;
        let cert = capacity_feasible_routed(&net, &pi, &lambda, routing)?;
        let path = report::write_atomic(out, "certificate.json", pretty(&cert).as_bytes())?;
        if cert.feasible {
            println!("feasible");
        } else {
            println!("infeasible");
            if let Some(w) = &cert.witness {
                println!("violated constraint families: {}", w.families.join(", "));
            }
        }
        println!("certificate: {}", path.display());
    } else if let Some(direction) = &a.direction {
        let direction = expand_rates(&net, direction, "--direction")?;
        let bound = max_throughput_multiplier_routed(&net, &pi, &direction, routing)?;
        let path = report::write_atomic(out, "certificate.json", pretty(&bound).as_bytes())?;
        match bound {
            ThroughputBound::Finite { rho, .. } => println!("rho* = {rho:.6}"),
            ThroughputBound::Unbounded => println!("rho* unbounded: every multiple of the direction is serviceable"),
        }
        println!("certificate: {}", path.display());
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("certificate serializes") + "\n"
}

/// Re-runs the manifest at `args.manifest`, writes the regenerated artifacts
/// and checks them against the recorded hashes. Returns the output directory
/// and the number of artifacts checked.
pub fn replay(args: &ReplayArgs) -> Result<(PathBuf, usize), Failure> {
    let text = String::from_utf8(read(&args.manifest)?)
        .map_err(|_| Failure::Config(anyhow!("{} is not UTF-8", args.manifest.display())))?;
    let manifest = Manifest::from_json(&text)?;
    let file: ScenarioFile = serde_json::from_value(manifest.scenario.clone()).map_err(|e| ConfigError::Parse {
        context: "embedded scenario".into(),
        message: e.to_string(),
    })?;
    let sc = Scenario::from_file(file)?;
    if sc.hash() != manifest.scenario_sha256 {
        return Err(Failure::Config(anyhow!("embedded scenario does not match its recorded hash")));
    }
    let mut argv: Vec<String> = vec!["bpsignal".into(), manifest.command.clone()];
    argv.extend(manifest.args.iter().cloned());
    argv.extend(["--scenario".into(), "embedded".into(), "--out".into(), "unused".into()]);
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Config(anyhow!("manifest arguments: {e}")))?;
    let arts = execute(&cli.command, &sc)?;

    let out = match &args.out {
        Some(p) => p.clone(),
        None => args.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    report::write_artifacts(&out, &arts.files, &arts.manifest)?;

    let mut mismatched = Vec::new();
    for (name, hash) in &manifest.artifacts {
        match arts.manifest.artifacts.get(name) {
            Some(h) if h == hash => {}
            _ => mismatched.push(name.clone()),
        }
    }
    for name in arts.manifest.artifacts.keys() {
        if !manifest.artifacts.contains_key(name) {
            mismatched.push(name.clone());
        }
    }
    if !mismatched.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "replay differs from the manifest in: {}",
            mismatched.join(", ")
        )));
    }
    Ok((out, manifest.artifacts.len()))
}
