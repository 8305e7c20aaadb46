//! Scenario files: network, horizon, seed, arrivals, routing, traffic states
//! and controller parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arrivals::{ArrivalKind, ArrivalProcess};
use super::states::{StateKind, StateProcess};
use crate::control::{
    BackpressureController, Controller, ControllerKind, FixedTimeController, FixedTimePlan,
    ScatsController, ScatsParams, TiePolicy,
};
use crate::error::ConfigError;
use crate::network::{load_network, JunctionId, LinkId, Network, NetworkDef};

/// Either a path (relative to the scenario file) or an inline network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkRef {
    Path(String),
    Inline(NetworkDef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub link: LinkId,
    pub process: ArrivalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRatioSpec {
    pub link: LinkId,
    /// `(downstream link, fraction)` pairs.
    pub fractions: Vec<(LinkId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub junction: JunctionId,
    pub process: StateKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackpressureParams {
    pub tie: TiePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionPlan {
    pub junction: JunctionId,
    pub plan: FixedTimePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedTimeParams {
    pub plans: Vec<JunctionPlan>,
    /// Green per phase for junctions without an explicit plan.
    pub default_green: u32,
}

impl Default for FixedTimeParams {
    fn default() -> Self {
        FixedTimeParams {
            plans: Vec::new(),
            default_green: 10,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub network: NetworkRef,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default = "one")]
    pub slot_seconds: f64,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub arrivals: Vec<ArrivalSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turn_ratios: Vec<TurnRatioSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<StateSpec>,
    #[serde(default)]
    pub backpressure: BackpressureParams,
    #[serde(default)]
    pub fixed_time: FixedTimeParams,
    #[serde(default)]
    pub scats: ScatsParams,
    /// Multiplies every arrival process.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub arrival_scale: f64,
}

fn default_controller() -> ControllerKind {
    ControllerKind::Backpressure
}

/// Per-movement routing fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnRatios {
    /// Fraction of the upstream link's traffic taking each global movement.
    pub fractions: Vec<f64>,
}

impl TurnRatios {
    /// Uniform over each link's outgoing movements.
    pub fn uniform(net: &Network) -> Self {
        let mut fractions = vec![0.0; net.movements().len()];
        for l in net.links() {
            let out = net.outgoing(l.id);
            for &m in out {
                fractions[m] = 1.0 / out.len() as f64;
            }
        }
        TurnRatios { fractions }
    }

    pub fn from_specs(net: &Network, specs: &[TurnRatioSpec]) -> Result<Self, ConfigError> {
        let mut ratios = TurnRatios::uniform(net);
        let mut seen = vec![false; net.num_links()];
        for spec in specs {
            let a = spec.link;
            if a.index() >= net.num_links() {
                return Err(ConfigError::invalid(format!("turn ratios: unknown link {a}")));
            }
            if std::mem::replace(&mut seen[a.index()], true) {
                return Err(ConfigError::invalid(format!("turn ratios: link {a} listed twice")));
            }
            for &m in net.outgoing(a) {
                ratios.fractions[m] = 0.0;
            }
            let mut sum = 0.0;
            for &(b, f) in &spec.fractions {
                let m = net
                    .movement_index((a, b).into())
                    .ok_or_else(|| ConfigError::invalid(format!("turn ratios: no movement ({a}, {b})")))?;
                if !(f.is_finite() && f >= 0.0) {
                    return Err(ConfigError::invalid(format!("turn ratios: fraction {f} on ({a}, {b})")));
                }
                ratios.fractions[m] += f;
                sum += f;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ConfigError::invalid(format!(
                    "turn ratios for link {a} sum to {sum}, not 1"
                )));
            }
        }
        Ok(ratios)
    }
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub network: Network,
    /// Arrival process per link (`None` for links without arrivals).
    pub arrivals: Vec<Option<ArrivalProcess>>,
    pub turn_ratios: TurnRatios,
    pub states: Vec<StateProcess>,
}

const STATE_STREAM_BASE: u64 = 1 << 32;

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::from_json(&text, &base, &path.display().to_string())
    }

    /// Parses a scenario document; relative network paths resolve against `base`.
    pub fn from_json(text: &[u8], base: &Path, context: &str) -> Result<Self, ConfigError> {
        let mut file: ScenarioFile = serde_json::from_slice(text).map_err(|e| ConfigError::Parse {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        if let NetworkRef::Path(p) = &file.network {
            let path: PathBuf = base.join(p);
            let bytes = std::fs::read(&path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let net = load_network(&bytes)?;
            file.network = NetworkRef::Inline(net.def().clone());
        }
        Scenario::from_file(file)
    }

    /// Builds from a document whose network is inline.
    pub fn from_file(file: ScenarioFile) -> Result<Self, ConfigError> {
        let def = match &file.network {
            NetworkRef::Inline(def) => def.clone(),
            NetworkRef::Path(p) => {
                return Err(ConfigError::invalid(format!("network path '{p}' not resolved")))
            }
        };
        let network = Network::new(def)?;
        if !(file.slot_seconds > 0.0) {
            return Err(ConfigError::invalid("slot_seconds must be > 0"));
        }
        if !(file.arrival_scale.is_finite() && file.arrival_scale >= 0.0) {
            return Err(ConfigError::invalid("arrival_scale must be >= 0"));
        }

        let mut arrivals = vec![None; network.num_links()];
        for spec in &file.arrivals {
            let a = spec.link;
            if a.index() >= network.num_links() {
                return Err(ConfigError::invalid(format!("arrivals on unknown link {a}")));
            }
            if !network.link(a).entry {
                return Err(ConfigError::invalid(format!("arrivals on link {a}, which is not an entry link")));
            }
            if arrivals[a.index()].is_some() {
                return Err(ConfigError::invalid(format!("link {a} has two arrival processes")));
            }
            let mut p = ArrivalProcess::new(spec.process.clone(), a.0 as u64)
                .map_err(|e| ConfigError::invalid(format!("arrivals on link {a}: {e}")))?;
            p.scale = file.arrival_scale;
            arrivals[a.index()] = Some(p);
        }

        let turn_ratios = TurnRatios::from_specs(&network, &file.turn_ratios)?;

        let mut states: Vec<Option<StateProcess>> = vec![None; network.num_junctions()];
        for spec in &file.states {
            let j = spec.junction.index();
            if j >= network.num_junctions() {
                return Err(ConfigError::invalid(format!("state process for unknown junction {}", spec.junction)));
            }
            if states[j].is_some() {
                return Err(ConfigError::invalid(format!("junction {j} has two state processes")));
            }
            states[j] = Some(StateProcess::new(&network, j, spec.process.clone(), STATE_STREAM_BASE + j as u64)?);
        }
        let states = states
            .into_iter()
            .enumerate()
            .map(|(j, s)| s.unwrap_or_else(|| StateProcess::default_for(&network, j, STATE_STREAM_BASE + j as u64)))
            .collect();

        let sc = Scenario {
            file,
            network,
            arrivals,
            turn_ratios,
            states,
        };
        // Surface controller configuration errors at load time.
        sc.build_controller(sc.file.controller)?;
        Ok(sc)
    }

    pub fn horizon(&self) -> u64 {
        self.file.horizon
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn controller_kind(&self) -> ControllerKind {
        self.file.controller
    }

    /// Same scenario with every arrival process multiplied by `rho`.
    pub fn scaled(&self, rho: f64) -> Self {
        let mut sc = self.clone();
        sc.file.arrival_scale = self.file.arrival_scale * rho;
        for p in sc.arrivals.iter_mut().flatten() {
            p.scale = sc.file.arrival_scale;
        }
        sc
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut sc = self.clone();
        sc.file.seed = seed;
        sc
    }

    pub fn with_horizon(&self, horizon: u64) -> Self {
        let mut sc = self.clone();
        sc.file.horizon = horizon;
        sc
    }

    pub fn with_controller(&self, kind: ControllerKind) -> Self {
        let mut sc = self.clone();
        sc.file.controller = kind;
        sc
    }

    /// Mean arrival rate per link after scaling.
    pub fn mean_arrival_rates(&self) -> Vec<f64> {
        self.arrivals
            .iter()
            .map(|p| p.as_ref().map_or(0.0, ArrivalProcess::mean_rate))
            .collect()
    }

    /// Stationary state distribution per junction.
    pub fn state_distribution(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(StateProcess::stationary).collect()
    }

    /// Canonical self-contained JSON (network inlined).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    /// SHA-256 of [`Scenario::to_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn build_controller(&self, kind: ControllerKind) -> Result<Box<dyn Controller>, ConfigError> {
        let net = &self.network;
        Ok(match kind {
            ControllerKind::Backpressure => {
                Box::new(BackpressureController::new(net, self.file.backpressure.tie))
            }
            ControllerKind::FixedTime => {
                let ft = &self.file.fixed_time;
                if ft.default_green == 0 {
                    return Err(ConfigError::invalid("fixed_time.default_green must be >= 1"));
                }
                let mut plans: Vec<Option<FixedTimePlan>> = vec![None; net.num_junctions()];
                for jp in &ft.plans {
                    let j = jp.junction.index();
                    if j >= plans.len() {
                        return Err(ConfigError::invalid(format!(
                            "fixed-time plan for unknown junction {}",
                            jp.junction
                        )));
                    }
                    plans[j] = Some(jp.plan.clone());
                }
                let plans = plans
                    .into_iter()
                    .enumerate()
                    .map(|(j, p)| p.unwrap_or_else(|| FixedTimePlan::uniform(net, j, ft.default_green)))
                    .collect();
                Box::new(FixedTimeController::new(net, plans)?)
            }
            ControllerKind::Scats => Box::new(ScatsController::new(net, &self.file.scats)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
    }

    #[test]
    fn loads_shipped_scenarios() {
        for name in [
            "crossroads.json",
            "crossroads_stability.json",
            "conflict2_stability.json",
            "tandem_stability.json",
        ] {
            let sc = Scenario::load(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(sc.horizon() > 0);
        }
    }

    #[test]
    fn self_contained_round_trip() {
        let sc = Scenario::load(&scenario_dir().join("crossroads.json")).unwrap();
        let again = Scenario::from_json(sc.to_json().as_bytes(), Path::new("/nonexistent"), "inline").unwrap();
        assert_eq!(again.hash(), sc.hash());
        assert_eq!(again.mean_arrival_rates(), sc.mean_arrival_rates());
    }

    #[test]
    fn scaling_changes_hash_and_rates() {
        let sc = Scenario::load(&scenario_dir().join("conflict2_stability.json")).unwrap();
        let s2 = sc.scaled(2.0);
        assert_ne!(sc.hash(), s2.hash());
        let (a, b) = (sc.mean_arrival_rates(), s2.mean_arrival_rates());
        assert!((a[0] - 0.3).abs() < 1e-12);
        assert!((b[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let sc = Scenario::load(&scenario_dir().join("conflict2_stability.json")).unwrap();
        let text = sc.to_json();
        let base = Path::new("/");
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["arrivals"][0]["process"] = serde_json::json!({"kind": "poisson", "rate": 1.0});
        let poisson = doc.to_string();
        let err = Scenario::from_json(poisson.as_bytes(), base, "x").unwrap_err();
        assert!(err.to_string().contains("unbounded"), "{err}");
        let unknown = text.replacen("\"horizon\"", "\"bogus\": 1, \"horizon\"", 1);
        assert!(matches!(Scenario::from_json(unknown.as_bytes(), base, "x"), Err(ConfigError::Parse { .. })));
        let exit_arrivals = text.replacen("\"link\": 1,", "\"link\": 2,", 1);
        assert!(Scenario::from_json(exit_arrivals.as_bytes(), base, "x").is_err());
    }

    #[test]
    fn turn_ratios_validated() {
        let sc = Scenario::load(&scenario_dir().join("crossroads.json")).unwrap();
        let net = &sc.network;
        let bad = vec![TurnRatioSpec {
            link: LinkId(0),
            fractions: vec![(LinkId(9), 0.5), (LinkId(11), 0.4)],
        }];
        assert!(TurnRatios::from_specs(net, &bad).is_err());
        let missing = vec![TurnRatioSpec {
            link: LinkId(0),
            fractions: vec![(LinkId(8), 1.0)],
        }];
        assert!(TurnRatios::from_specs(net, &missing).is_err());
        let uni = TurnRatios::uniform(net);
        let m = net.movement_index(crate::network::Movement::new(0, 9)).unwrap();
        assert_eq!(uni.fractions[m], 0.5);
        assert_eq!(sc.turn_ratios.fractions[m], 0.75);
    }
}
