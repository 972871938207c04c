//! Scenario files: one JSON document holding the network and the simulation
//! run.
//!
//! ```json
//! {
//!   "nodes": ["a", "b", "c"],
//!   "links": [{"u": "a", "v": "b", "capacity_bps": 8}, {"u": "b", "v": "c", "capacity_bps": 8}],
//!   "flows": [{"src": "a", "dst": "c", "rate_pps": 0.5}],
//!   "traffic": {"mean_packet_bytes": 1},
//!   "routing": "hop_count",
//!   "sim": {"mode": "akia", "stop": {"packets_per_flow": 1000000}, "warmup": 0.05, "seed": 1}
//! }
//! ```
//!
//! A flow may give `rate_bps` instead of `rate_pps`; it is converted with the
//! global mean packet length. Per-flow packet lengths are rejected.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::Method;
use crate::dessim::{SimConfig, StopCriterion, DEFAULT_WARMUP};
use crate::netmodel::{
    build_routing, check_stability, heavily_loaded, link_state_from_paths, resolve_path, Flow,
    Link, LinkState, Path, RoutingDirectory, RoutingMetric, Topology, HIGH_LOAD_WARNING,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("unstable network: {0}")]
    Unstable(String),
}

impl ScenarioError {
    /// Process exit code: 2 for unusable input, 3 for an overloaded network.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Unstable(_) => 3,
            _ => 2,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeLabel {
    Number(u64),
    Name(String),
}

impl std::fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeLabel::Number(n) => write!(f, "{n}"),
            NodeLabel::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub u: NodeLabel,
    pub v: NodeLabel,
    pub capacity_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub src: NodeLabel,
    pub dst: NodeLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_pps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bps: Option<f64>,
    // accepted only so that it can be rejected with a clear message
    #[serde(default, skip_serializing)]
    pub mean_packet_bytes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub mean_packet_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_mode")]
    pub mode: Method,
    pub stop: StopCriterion,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> Method {
    Method::Akia
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP
}

/// The file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub nodes: Vec<NodeLabel>,
    pub links: Vec<LinkSpec>,
    pub flows: Vec<FlowSpec>,
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub routing: RoutingMetric,
    pub sim: SimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

/// A validated scenario with routing resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub flows: Vec<Flow>,
    pub routing: RoutingMetric,
    pub directory: RoutingDirectory,
    pub paths: Vec<Path>,
    pub sim: SimConfig,
    pub output: Option<PathBuf>,
    /// Non-fatal findings, such as links loaded at or above 95 %.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn mean_packet_bits(&self) -> f64 {
        self.sim.mean_packet_bits
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.sim.mean_packet_bits
    }

    pub fn link_state(&self) -> LinkState {
        link_state_from_paths(&self.topology, self.flows.iter().zip(&self.paths), self.mu())
            .expect("paths were resolved at load time")
    }

    /// Highest link load in the network.
    pub fn max_load(&self) -> f64 {
        let state = self.link_state();
        (0..state.link_count()).map(|l| state.load(l)).fold(0.0, f64::max)
    }

    /// Copy with every flow rate multiplied so that the busiest link runs at
    /// load `rho`.
    pub fn scaled_to_load(&self, rho: f64) -> Result<Scenario, ScenarioError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("target load {rho} must be positive")));
        }
        let factor = rho / self.max_load();
        let mut out = self.clone();
        for f in &mut out.flows {
            f.rate *= factor;
        }
        out.warnings.clear();
        out.check_loads()?;
        Ok(out)
    }

    fn check_loads(&mut self) -> Result<(), ScenarioError> {
        let state = self.link_state();
        let name = |l: usize| {
            let link = self.topology.link(l);
            format!(
                "{} -> {}",
                self.topology.label(link.from),
                self.topology.label(link.to)
            )
        };
        let over = check_stability(&state);
        if !over.is_empty() {
            let list: Vec<String> = over
                .iter()
                .map(|&l| format!("{} (load {:.4})", name(l), state.load(l)))
                .collect();
            return Err(ScenarioError::Unstable(list.join(", ")));
        }
        for l in heavily_loaded(&state, HIGH_LOAD_WARNING) {
            self.warnings.push(format!(
                "link {} is heavily loaded (load {:.4})",
                name(l),
                state.load(l)
            ));
        }
        Ok(())
    }
}

pub fn load_scenario(path: &FsPath) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    build_scenario(&file)
}

pub fn build_scenario(file: &ScenarioFile) -> Result<Scenario, ScenarioError> {
    let bytes = file.traffic.mean_packet_bytes;
    if !(bytes > 0.0 && bytes.is_finite()) {
        return Err(invalid(format!(
            "traffic.mean_packet_bytes: must be positive, got {bytes}"
        )));
    }
    let mean_packet_bits = 8.0 * bytes;

    let labels: Vec<String> = file.nodes.iter().map(|n| n.to_string()).collect();
    let lookup = |label: &NodeLabel, field: String| -> Result<usize, ScenarioError> {
        let key = label.to_string();
        labels
            .iter()
            .position(|l| *l == key)
            .ok_or_else(|| invalid(format!("{field}: unknown node {key:?}")))
    };

    let mut links = Vec::with_capacity(file.links.len());
    for (i, l) in file.links.iter().enumerate() {
        links.push(Link {
            from: lookup(&l.u, format!("links[{i}].u"))?,
            to: lookup(&l.v, format!("links[{i}].v"))?,
            capacity: l.capacity_bps,
        });
    }
    let topology = Topology::new(labels.clone(), links).map_err(|e| invalid(e.to_string()))?;

    if file.flows.is_empty() {
        return Err(invalid("flows: at least one flow is required"));
    }
    let mut flows = Vec::with_capacity(file.flows.len());
    for (i, f) in file.flows.iter().enumerate() {
        if f.mean_packet_bytes.is_some() {
            return Err(invalid(format!(
                "flows[{i}].mean_packet_bytes: per-flow packet lengths are not supported; \
                 set traffic.mean_packet_bytes"
            )));
        }
        let rate = match (f.rate_pps, f.rate_bps) {
            (Some(pps), None) => pps,
            (None, Some(bps)) => bps / mean_packet_bits,
            _ => {
                return Err(invalid(format!(
                    "flows[{i}]: give exactly one of rate_pps and rate_bps"
                )))
            }
        };
        let flow = Flow {
            id: i,
            source: lookup(&f.src, format!("flows[{i}].src"))?,
            destination: lookup(&f.dst, format!("flows[{i}].dst"))?,
            rate,
        };
        flow.validate(&topology)
            .map_err(|e| invalid(format!("flows[{i}]: {e}")))?;
        flows.push(flow);
    }

    let directory = build_routing(&topology, file.routing);
    let paths = flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            resolve_path(&topology, &directory, f).map_err(|e| invalid(format!("flows[{i}]: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let s = &file.sim;
    if !(0.0..1.0).contains(&s.warmup) {
        return Err(invalid(format!("sim.warmup: must lie in [0, 1), got {}", s.warmup)));
    }
    match s.stop {
        StopCriterion::PacketsPerFlow(0) => {
            return Err(invalid("sim.stop.packets_per_flow: must be positive"))
        }
        StopCriterion::Seconds(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(invalid(format!("sim.stop.seconds: must be positive, got {t}")))
        }
        _ => {}
    }
    let mut sim = SimConfig::new(s.mode, s.stop, mean_packet_bits, s.seed);
    sim.warmup = s.warmup;

    let mut scenario = Scenario {
        topology,
        flows,
        routing: file.routing,
        directory,
        paths,
        sim,
        output: file.output.clone(),
        warnings: Vec::new(),
    };
    scenario.check_loads()?;
    Ok(scenario)
}

/// The equal-capacity two-link tandem with `μc = 1`: 8 bit/s links and
/// 1-byte mean packets, one flow at `γ = rho`.
pub fn tandem_file(rho: f64, packets: u64, seed: u64) -> ScenarioFile {
    let n = |k: u64| NodeLabel::Number(k);
    ScenarioFile {
        nodes: vec![n(1), n(2), n(3)],
        links: vec![
            LinkSpec { u: n(1), v: n(2), capacity_bps: 8.0 },
            LinkSpec { u: n(2), v: n(3), capacity_bps: 8.0 },
        ],
        flows: vec![FlowSpec {
            src: n(1),
            dst: n(3),
            rate_pps: Some(rho),
            rate_bps: None,
            mean_packet_bytes: None,
        }],
        traffic: TrafficSpec { mean_packet_bytes: 1.0 },
        routing: RoutingMetric::HopCount,
        sim: SimSpec {
            mode: Method::Akia,
            stop: StopCriterion::PacketsPerFlow(packets),
            warmup: DEFAULT_WARMUP,
            seed,
        },
        output: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tandem_scenario_loads() {
        let s = build_scenario(&tandem_file(0.5, 1000, 1)).unwrap();
        let state = s.link_state();
        assert_eq!(state.arrival_rate(0), 0.5);
        assert_eq!(state.arrival_rate(1), 0.5);
        assert_eq!(state.service_rate(0), 1.0);
        assert_eq!(s.paths[0].nodes(), &[0, 1, 2]);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn round_trips_through_json() {
        let file = tandem_file(0.3, 10, 2);
        let back: ScenarioFile = serde_json::from_str(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn rate_in_bits_per_second() {
        let text = r#"{
            "nodes": ["a", "b"],
            "links": [{"u": "a", "v": "b", "capacity_bps": 1e9}],
            "flows": [{"src": "a", "dst": "b", "rate_bps": 2e6}],
            "traffic": {"mean_packet_bytes": 186},
            "sim": {"stop": {"seconds": 1}}
        }"#;
        let s = parse_scenario(text).unwrap();
        assert!((s.flows[0].rate - 1344.1).abs() < 0.1);
        assert_eq!(s.sim.mode, Method::Akia);
        assert_eq!(s.sim.warmup, DEFAULT_WARMUP);
    }

    fn tweak(edit: impl FnOnce(&mut ScenarioFile)) -> ScenarioError {
        let mut f = tandem_file(0.5, 10, 1);
        edit(&mut f);
        build_scenario(&f).unwrap_err()
    }

    #[test]
    fn validation_errors_name_the_problem() {
        let e = tweak(|f| f.flows[0].dst = NodeLabel::Name("x".into()));
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("flows[0].dst") && e.to_string().contains("\"x\""), "{e}");

        let e = tweak(|f| f.flows.clear());
        assert!(e.to_string().contains("at least one flow"));

        let e = tweak(|f| f.flows[0].rate_pps = Some(0.0));
        assert_eq!(e.exit_code(), 2);

        let e = tweak(|f| f.flows[0].mean_packet_bytes = Some(100.0));
        assert!(e.to_string().contains("per-flow"), "{e}");

        let e = tweak(|f| f.flows[0].rate_pps = Some(1.0));
        assert!(matches!(e, ScenarioError::Unstable(_)));
        assert_eq!(e.exit_code(), 3);

        let e = tweak(|f| f.sim.warmup = 1.0);
        assert!(e.to_string().contains("sim.warmup"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_scenario("{\n  \"nodes\": [1, 2],\n  \"links\": 5\n}").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse(_)));
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_scenario(r#"{"nodes": [], "links": [], "flows": [], "traffic": {"mean_packet_bytes": 1}, "sim": {"stop": {"seconds": 1}}, "extra": 1}"#).unwrap_err();
        assert!(e.to_string().contains("extra"), "{e}");
    }

    #[test]
    fn heavy_load_warns_and_scaling_moves_load() {
        let s = build_scenario(&tandem_file(0.97, 10, 1)).unwrap();
        assert_eq!(s.warnings.len(), 2);
        let t = s.scaled_to_load(0.3).unwrap();
        assert!((t.flows[0].rate - 0.3).abs() < 1e-15);
        assert!(t.warnings.is_empty());
        assert!(matches!(s.scaled_to_load(1.0), Err(ScenarioError::Unstable(_))));
    }
}
