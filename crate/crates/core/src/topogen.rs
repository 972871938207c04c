//! Tiered random topologies with suggested flows, written as scenarios.
//!
//! Nodes are split into capacity tiers, fastest first. Nodes join in order
//! and attach to earlier nodes of a faster tier (the first tier attaches
//! among itself), picking neighbours with probability proportional to
//! degree + 1. Every undirected edge becomes two directed links whose
//! capacity is the slower endpoint's tier capacity.

use rand::Rng;
use thiserror::Error;

use crate::approx::Method;
use crate::dessim::{StopCriterion, DEFAULT_WARMUP};
use crate::netmodel::RoutingMetric;
use crate::rng::{stream, StreamTag};
use crate::scenario::{FlowSpec, LinkSpec, NodeLabel, ScenarioFile, SimSpec, TrafficSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopogenError {
    #[error("{nodes} nodes cannot fill {tiers} tiers")]
    TooFewNodes { nodes: usize, tiers: usize },
    #[error("tier spec is malformed: {0}")]
    BadTiers(String),
    #[error("need at least two candidate endpoints for flows")]
    NoFlowEndpoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub capacity_bps: f64,
    /// Share of the nodes in this tier; shares are normalized.
    pub share: f64,
    /// Links a joining node opens towards faster tiers.
    pub uplinks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub nodes: usize,
    pub seed: u64,
    pub tiers: Vec<Tier>,
    pub flows: usize,
    pub flow_rate_bps: f64,
    pub mean_packet_bytes: f64,
    pub sim_seconds: f64,
}

impl GeneratorSpec {
    /// 10 Gbit/s and 1 Gbit/s core, 100 Mbit/s edge; 2 Mbit/s flows of
    /// 186-byte packets, simulated for 20 s.
    pub fn new(nodes: usize, seed: u64) -> Self {
        Self {
            nodes,
            seed,
            tiers: vec![
                Tier { capacity_bps: 10e9, share: 0.1, uplinks: 2 },
                Tier { capacity_bps: 1e9, share: 0.3, uplinks: 2 },
                Tier { capacity_bps: 100e6, share: 0.6, uplinks: 1 },
            ],
            flows: 5 * nodes,
            flow_rate_bps: 2e6,
            mean_packet_bytes: 186.0,
            sim_seconds: 20.0,
        }
    }
}

/// Nodes per tier: rounded shares, each tier at least one node.
fn tier_sizes(nodes: usize, tiers: &[Tier]) -> Result<Vec<usize>, TopogenError> {
    if tiers.is_empty() {
        return Err(TopogenError::BadTiers("no tiers".into()));
    }
    if tiers
        .iter()
        .any(|t| !(t.share > 0.0 && t.capacity_bps > 0.0 && t.capacity_bps.is_finite()) || t.uplinks == 0)
    {
        return Err(TopogenError::BadTiers(
            "shares and capacities must be positive, uplinks at least one".into(),
        ));
    }
    if nodes < tiers.len().max(2) {
        return Err(TopogenError::TooFewNodes { nodes, tiers: tiers.len() });
    }
    let total: f64 = tiers.iter().map(|t| t.share).sum();
    let mut sizes: Vec<usize> = tiers
        .iter()
        .map(|t| ((t.share / total * nodes as f64).round() as usize).max(1))
        .collect();
    // settle rounding on the largest tier
    while sizes.iter().sum::<usize>() != nodes {
        let big = (0..sizes.len()).max_by_key(|&i| (sizes[i], i)).unwrap();
        if sizes.iter().sum::<usize>() > nodes {
            sizes[big] -= 1;
        } else {
            sizes[big] += 1;
        }
    }
    Ok(sizes)
}

pub fn generate_topology(spec: &GeneratorSpec) -> Result<ScenarioFile, TopogenError> {
    let sizes = tier_sizes(spec.nodes, &spec.tiers)?;
    let tier_of: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(t, &k)| std::iter::repeat_n(t, k))
        .collect();
    let n = spec.nodes;
    let mut rng = stream(spec.seed, StreamTag::Topology, 0);
    let mut degree = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = Vec::new();

    for v in 1..n {
        let t = tier_of[v];
        let candidates: Vec<usize> = (0..v)
            .filter(|&u| if t == 0 { true } else { tier_of[u] < t })
            .collect();
        let want = spec.tiers[t].uplinks.min(candidates.len());
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        while chosen.len() < want {
            let weights: Vec<usize> = candidates
                .iter()
                .map(|&u| if chosen.contains(&u) { 0 } else { degree[u] + 1 })
                .collect();
            let mut pick = rng.random_range(0..weights.iter().sum::<usize>());
            let idx = weights
                .iter()
                .position(|&w| {
                    if pick < w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .unwrap();
            chosen.push(candidates[idx]);
        }
        chosen.sort_unstable();
        for u in chosen {
            degree[u] += 1;
            degree[v] += 1;
            edges.push((u, v));
        }
    }

    let label = |i: usize| NodeLabel::Name(format!("r{i}"));
    let capacity = |u: usize, v: usize| {
        spec.tiers[tier_of[u]]
            .capacity_bps
            .min(spec.tiers[tier_of[v]].capacity_bps)
    };
    let links = edges
        .iter()
        .flat_map(|&(u, v)| [(u, v), (v, u)])
        .map(|(u, v)| LinkSpec { u: label(u), v: label(v), capacity_bps: capacity(u, v) })
        .collect();

    // hosts hang off the slowest tier
    let last = spec.tiers.len() - 1;
    let mut endpoints: Vec<usize> = (0..n).filter(|&i| tier_of[i] == last).collect();
    if endpoints.len() < 2 {
        endpoints = (0..n).collect();
    }
    let mut flow_rng = stream(spec.seed, StreamTag::Topology, 1);
    let flows = (0..spec.flows)
        .map(|_| {
            let s = flow_rng.random_range(0..endpoints.len());
            let mut d = flow_rng.random_range(0..endpoints.len() - 1);
            if d >= s {
                d += 1;
            }
            FlowSpec {
                src: label(endpoints[s]),
                dst: label(endpoints[d]),
                rate_pps: None,
                rate_bps: Some(spec.flow_rate_bps),
                mean_packet_bytes: None,
            }
        })
        .collect();

    Ok(ScenarioFile {
        nodes: (0..n).map(label).collect(),
        links,
        flows,
        traffic: TrafficSpec { mean_packet_bytes: spec.mean_packet_bytes },
        routing: RoutingMetric::HopCount,
        sim: SimSpec {
            mode: Method::Akia,
            stop: StopCriterion::Seconds(spec.sim_seconds),
            warmup: DEFAULT_WARMUP,
            seed: spec.seed,
        },
        output: None,
    })
}
