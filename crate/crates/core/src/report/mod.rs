//! Artifact rendering: versioned CSV tables, SVG figures, run manifests and
//! atomic file output.

pub mod svg;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{LyapunovSeries, MultiplierEstimate, StabilityReport};
use crate::network::Network;
use crate::sim::Trace;
pub use svg::Series;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to plot in '{0}'")]
    Empty(String),
    #[error("cannot write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
}

pub const TRACE_SCHEMA: &str = "trace-v1";
pub const STABILITY_SCHEMA: &str = "stability-v1";
pub const DRIFT_SCHEMA: &str = "drift-v1";
pub const SWEEP_SCHEMA: &str = "sweep-v1";
pub const COMPARE_SCHEMA: &str = "compare-v1";
pub const MANIFEST_SCHEMA: &str = "manifest-v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn table(schema: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = format!("#schema={schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    out
}

fn link_label(net: &Network, a: usize) -> String {
    let link = &net.links()[a];
    link.name.clone().unwrap_or_else(|| format!("link {}", link.id.0))
}

/// One `queue` row per (slot, link) holding the queue at the end of the slot,
/// and one `phase` row per (slot, junction) holding the active phase id.
pub fn trace_csv(trace: &Trace, net: &Network) -> Vec<u8> {
    let rows = trace.records.iter().flat_map(|rec| {
        let queues = rec
            .queues_after
            .iter()
            .enumerate()
            .map(move |(a, q)| vec![rec.t.to_string(), "queue".into(), a.to_string(), q.to_string()]);
        let phases = rec.decisions.iter().enumerate().map(move |(j, &p)| {
            vec![
                rec.t.to_string(),
                "phase".into(),
                j.to_string(),
                net.junction(j).phases[p].id.0.to_string(),
            ]
        });
        queues.chain(phases).collect::<Vec<_>>()
    });
    table(TRACE_SCHEMA, &["slot", "kind", "id", "value"], rows)
}

pub fn stability_csv(report: &StabilityReport) -> Vec<u8> {
    let mut rows = Vec::new();
    for (v, per_queue) in report.thresholds.iter().zip(&report.per_queue) {
        for (a, s) in per_queue.iter().enumerate() {
            rows.push(vec![v.to_string(), a.to_string(), s.to_string()]);
        }
    }
    for (v, w) in report.thresholds.iter().zip(&report.worst) {
        rows.push(vec![v.to_string(), "worst".into(), w.to_string()]);
    }
    table(STABILITY_SCHEMA, &["threshold", "queue", "statistic"], rows)
}

pub fn drift_csv(series: &LyapunovSeries) -> Vec<u8> {
    let rows = series.bins.iter().map(|b| {
        vec![
            b.lo.to_string(),
            b.hi.to_string(),
            b.count.to_string(),
            b.mean_total.to_string(),
            b.mean_drift.to_string(),
        ]
    });
    table(DRIFT_SCHEMA, &["lo", "hi", "count", "mean_total", "mean_drift"], rows)
}

pub fn sweep_csv(estimates: &[MultiplierEstimate]) -> Vec<u8> {
    let evaluations = estimates.iter().flat_map(|e| {
        e.evaluations.iter().map(move |(rho, ok)| {
            vec![e.controller.to_string(), "evaluation".into(), rho.to_string(), ok.to_string(), String::new()]
        })
    });
    let summary = estimates.iter().map(|e| {
        vec![
            e.controller.to_string(),
            "estimate".into(),
            e.rho.to_string(),
            String::new(),
            e.at_upper_bound.to_string(),
        ]
    });
    table(
        SWEEP_SCHEMA,
        &["controller", "kind", "rho", "passed", "at_upper_bound"],
        evaluations.chain(summary).collect::<Vec<_>>(),
    )
}

/// Summary numbers for one controller's run in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub controller: String,
    pub max_queue: f64,
    pub mean_queue: f64,
    pub exited: f64,
    pub blocked_slots: u64,
}

pub fn summarize(label: &str, trace: &Trace, net: &Network) -> RunSummary {
    let lanes = lane_links(net);
    let (mut max_queue, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for tau in 0..=trace.len() {
        for &a in &lanes {
            let q = trace.queues_at(tau)[a];
            max_queue = max_queue.max(q);
            sum += q;
            n += 1;
        }
    }
    RunSummary {
        controller: label.to_string(),
        max_queue,
        mean_queue: if n > 0 { sum / n as f64 } else { 0.0 },
        exited: trace.records.iter().map(|r| r.exited).sum(),
        blocked_slots: trace.records.iter().filter(|r| r.backlog.iter().any(|&b| b > 0.0)).count() as u64,
    }
}

pub fn compare_csv(rows: &[RunSummary]) -> Vec<u8> {
    let rows = rows.iter().map(|r| {
        vec![
            r.controller.clone(),
            r.max_queue.to_string(),
            r.mean_queue.to_string(),
            r.exited.to_string(),
            r.blocked_slots.to_string(),
        ]
    });
    table(
        COMPARE_SCHEMA,
        &["controller", "max_queue", "mean_queue", "exited", "blocked_slots"],
        rows,
    )
}

/// Links that can hold a standing queue (everything but pure exits).
fn lane_links(net: &Network) -> Vec<usize> {
    let lanes: Vec<usize> = (0..net.num_links()).filter(|&a| !net.links()[a].exit).collect();
    if lanes.is_empty() {
        (0..net.num_links()).collect()
    } else {
        lanes
    }
}

/// Queue length of every non-exit link over time.
pub fn queues_per_link_svg(trace: &Trace, net: &Network) -> Result<String, ReportError> {
    if trace.is_empty() {
        return Err(ReportError::Empty("queues per link".into()));
    }
    let series: Vec<Series> = lane_links(net)
        .into_iter()
        .map(|a| {
            let ys: Vec<f64> = trace.records.iter().map(|r| r.queues_after[a]).collect();
            Series::from_values(link_label(net, a), &ys)
        })
        .collect();
    svg::line_chart("Queue length per link", "slot", "vehicles", &series)
}

fn per_slot(trace: &Trace, lanes: &[usize], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    trace
        .records
        .iter()
        .map(|r| {
            let qs: Vec<f64> = lanes.iter().map(|&a| r.queues_after[a]).collect();
            f(&qs)
        })
        .collect()
}

/// Largest and mean link queue per slot, one series per run.
pub fn queue_comparison_svgs(runs: &[(String, &Trace)], net: &Network) -> Result<(String, String), ReportError> {
    if runs.is_empty() || runs.iter().any(|(_, t)| t.is_empty()) {
        return Err(ReportError::Empty("queue comparison".into()));
    }
    let lanes = lane_links(net);
    let max: Vec<Series> = runs
        .iter()
        .map(|(label, t)| Series::from_values(label.clone(), &per_slot(t, &lanes, |q| q.iter().copied().fold(0.0, f64::max))))
        .collect();
    let avg: Vec<Series> = runs
        .iter()
        .map(|(label, t)| {
            Series::from_values(label.clone(), &per_slot(t, &lanes, |q| q.iter().sum::<f64>() / q.len() as f64))
        })
        .collect();
    Ok((
        svg::line_chart("Maximum link queue", "slot", "vehicles", &max)?,
        svg::line_chart("Average link queue", "slot", "vehicles", &avg)?,
    ))
}

pub fn sweep_multiplier_svg(estimates: &[MultiplierEstimate]) -> Result<String, ReportError> {
    let bars: Vec<(String, f64, bool)> = estimates
        .iter()
        .map(|e| (e.controller.to_string(), e.rho, e.at_upper_bound))
        .collect();
    svg::bar_chart("Largest sustainable arrival multiplier", "multiplier", &bars)
}

/// Record of how a set of artifacts was produced, sufficient to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    /// Subcommand name.
    pub command: String,
    /// Subcommand arguments other than the scenario path and output directory.
    pub args: Vec<String>,
    pub seed: u64,
    pub scenario_sha256: String,
    /// The scenario with its network inlined.
    pub scenario: serde_json::Value,
    /// Artifact file name to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, seed: u64, scenario_json: &str, artifacts: &BTreeMap<String, Vec<u8>>) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            seed,
            scenario_sha256: sha256_hex(scenario_json.as_bytes()),
            scenario: serde_json::from_str(scenario_json).expect("scenario JSON is valid"),
            artifacts: artifacts.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ReportError::Manifest(e.to_string()))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(ReportError::Manifest(format!("unsupported schema '{}'", m.schema)));
        }
        Ok(m)
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    let io = |source| ReportError::Io {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

/// Writes every artifact, then the manifest last.
pub fn write_artifacts(dir: &Path, artifacts: &BTreeMap<String, Vec<u8>>, manifest: &Manifest) -> Result<(), ReportError> {
    for (name, bytes) in artifacts {
        write_atomic(dir, name, bytes)?;
    }
    write_atomic(dir, "manifest.json", manifest.to_json().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, Scenario};

    fn scenario() -> Scenario {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/conflict2_stability.json");
        Scenario::load(&p).unwrap().with_horizon(5)
    }

    #[test]
    fn trace_csv_layout() {
        let sc = scenario();
        let trace = run(&sc).unwrap();
        let text = String::from_utf8(trace_csv(&trace, &sc.network)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#schema=trace-v1"));
        assert_eq!(lines.next(), Some("slot,kind,id,value"));
        // 4 links + 1 junction per slot.
        assert_eq!(text.lines().count(), 2 + 5 * 5);
        assert!(text.lines().any(|l| l.starts_with("0,phase,0,")));
    }

    #[test]
    fn one_slot_trace_plots() {
        let sc = scenario().with_horizon(1);
        let trace = run(&sc).unwrap();
        let svg = queues_per_link_svg(&trace, &sc.network).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        let empty = run(&sc.with_horizon(0)).unwrap();
        assert!(queues_per_link_svg(&empty, &sc.network).is_err());
    }

    #[test]
    fn atomic_write_and_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut arts = BTreeMap::new();
        arts.insert("a.csv".to_string(), b"x\n".to_vec());
        let m = Manifest::new("simulate", vec!["--seed".into(), "3".into()], 3, "{\"k\": 1}", &arts);
        write_artifacts(dir.path(), &arts, &m).unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), b"x\n");
        let back = Manifest::from_json(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.artifacts["a.csv"], sha256_hex(b"x\n"));
        assert!(Manifest::from_json("{}").is_err());
    }

    #[test]
    fn sha_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
