//! Per-flow end-to-end delay approximations.
//!
//! Both methods treat every link on the path as an independent M/M/1 queue
//! fed by the Poisson superposition of the flows routed over it (the
//! Kleinrock-style decomposition). They differ in how service times along
//! the path relate:
//!
//! * **AKIA**: a packet keeps its length at every hop, so the service times
//!   on the path are perfectly correlated and sum to `V / c̄` with
//!   `1/c̄ = Σ 1/c`. The delay is `C(p_Z, θ_Z)` with
//!   `p_Z = (ρ_1, …, ρ_h, 1)` and `θ_Z = (θ_1, …, θ_h, μ c̄)`: one queueing
//!   phase per link in path order, then the compound service phase.
//! * **KIA**: a fresh length is drawn at each hop. Each link's sojourn is
//!   then `Exp(θ_j)` and the delay is hypoexponential `C(1, θ_W)`.
//!
//! Model assumptions, which are stated but not enforced: the flow into each
//! queue is Poisson; queueing delays along a path are independent; the
//! compound service time is independent of the compound queueing delay.

use thiserror::Error;

use crate::netmodel::{LinkState, Path, Topology};
use crate::phasetype::{PhaseTypeError, PhaseTypeParams};

/// Modelling assumptions behind both approximations, for run metadata.
pub const ASSUMPTIONS: [&str; 3] = [
    "A1: the packet flow into every link queue is Poisson",
    "A2: queueing delays at different links of a path are independent",
    "A3: the compound service time is independent of the compound queueing delay",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("path has no links")]
    EmptyPath,
    #[error("path uses {0} -> {1}, which is not a link")]
    MissingLink(String, String),
    #[error("link {from} -> {to} is not stable (load {load})")]
    UnstableLink { from: String, to: String, load: f64 },
    #[error(transparent)]
    PhaseType(#[from] PhaseTypeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Akia,
    Kia,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Akia => "akia",
            Method::Kia => "kia",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "akia" => Ok(Method::Akia),
            "kia" => Ok(Method::Kia),
            other => Err(format!("unknown mode {other:?}, expected akia or kia")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowApproximation {
    pub flow_id: usize,
    pub method: Method,
    pub params: PhaseTypeParams,
    /// seconds
    pub mean: f64,
    /// standard deviation of the end-to-end delay, seconds
    pub jitter: f64,
    /// `c̄` in bits/s; AKIA only
    pub compound_capacity: Option<f64>,
}

impl FlowApproximation {
    pub fn hops(&self) -> usize {
        match self.method {
            Method::Akia => self.params.len() - 1,
            Method::Kia => self.params.len(),
        }
    }
}

/// Per-link `(ρ, θ, c)` along the path, checking stability.
fn path_links(
    topology: &Topology,
    path: &Path,
    state: &LinkState,
) -> Result<Vec<(f64, f64, f64)>, ApproxError> {
    if path.hops() == 0 {
        return Err(ApproxError::EmptyPath);
    }
    path.edges()
        .map(|(u, v)| {
            let link = topology.link_between(u, v).ok_or_else(|| {
                ApproxError::MissingLink(topology.label(u).into(), topology.label(v).into())
            })?;
            let load = state.load(link);
            if !(load < 1.0) {
                return Err(ApproxError::UnstableLink {
                    from: topology.label(u).into(),
                    to: topology.label(v).into(),
                    load,
                });
            }
            Ok((load, state.residual_rate(link), state.capacity(link)))
        })
        .collect()
}

/// Σ 1/θ over the queueing phases: identical for both methods.
fn mean_from_residuals(links: &[(f64, f64, f64)]) -> f64 {
    links.iter().map(|(_, theta, _)| 1.0 / theta).sum()
}

pub fn akia_approximation(
    flow_id: usize,
    topology: &Topology,
    path: &Path,
    state: &LinkState,
) -> Result<FlowApproximation, ApproxError> {
    let links = path_links(topology, path, state)?;
    let compound_capacity = 1.0 / links.iter().map(|(_, _, c)| 1.0 / c).sum::<f64>();
    let service_rate = state.mu() * compound_capacity;

    let mut probs: Vec<f64> = links.iter().map(|(rho, _, _)| *rho).collect();
    let mut rates: Vec<f64> = links.iter().map(|(_, theta, _)| *theta).collect();
    probs.push(1.0);
    rates.push(service_rate);
    let params = PhaseTypeParams::new(probs, rates)?;

    Ok(FlowApproximation {
        flow_id,
        method: Method::Akia,
        mean: mean_from_residuals(&links),
        jitter: params.std_dev(),
        params,
        compound_capacity: Some(compound_capacity),
    })
}

pub fn kia_approximation(
    flow_id: usize,
    topology: &Topology,
    path: &Path,
    state: &LinkState,
) -> Result<FlowApproximation, ApproxError> {
    let links = path_links(topology, path, state)?;
    let rates: Vec<f64> = links.iter().map(|(_, theta, _)| *theta).collect();
    let params = PhaseTypeParams::new(vec![1.0; rates.len()], rates)?;
    Ok(FlowApproximation {
        flow_id,
        method: Method::Kia,
        mean: mean_from_residuals(&links),
        jitter: params.std_dev(),
        params,
        compound_capacity: None,
    })
}

pub fn approximate(
    method: Method,
    flow_id: usize,
    topology: &Topology,
    path: &Path,
    state: &LinkState,
) -> Result<FlowApproximation, ApproxError> {
    match method {
        Method::Akia => akia_approximation(flow_id, topology, path, state),
        Method::Kia => kia_approximation(flow_id, topology, path, state),
    }
}

/// `sqrt(Σ 2p/θ² − (p/θ)²)` over `(p_Z, θ_Z)`.
pub fn jitter_akia(approx: &FlowApproximation) -> f64 {
    approx.params.variance().sqrt()
}

/// `sqrt(Σ 1/θ²)` over `θ_W`.
pub fn jitter_kia(approx: &FlowApproximation) -> f64 {
    approx.params.variance().sqrt()
}
