//! Directed network model: topology, flows, fixed routing and per-link load.
//!
//! Nodes are dense 0-based ids. External labels are kept only for display
//! and for mapping scenario files.

use std::collections::HashMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::{EdgeRef, Reversed};
use thiserror::Error;

pub type NodeId = usize;
pub type LinkId = usize;

/// Load at or above which scenario loading warns.
pub const HIGH_LOAD_WARNING: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("node label {0:?} appears more than once")]
    DuplicateNode(String),
    #[error("link {0} -> {1} is a self-loop")]
    SelfLoop(String, String),
    #[error("link {0} -> {1} is listed more than once")]
    DuplicateLink(String, String),
    #[error("link {from} -> {to}: capacity {capacity} must be positive and finite")]
    BadCapacity { from: String, to: String, capacity: f64 },
    #[error("node id {0} is out of range")]
    UnknownNode(NodeId),
    #[error("flow {0}: source and destination are both {1}")]
    FlowLoop(usize, String),
    #[error("flow {0}: rate {1} must be positive and finite")]
    BadRate(usize, f64),
    #[error("flow {flow}: {destination} is unreachable from {origin}")]
    Unreachable { flow: usize, origin: String, destination: String },
    #[error("mean packet length {0} bits must be positive and finite")]
    BadPacketLength(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    /// bits per second
    pub capacity: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    labels: Vec<String>,
    links: Vec<Link>,
    index: HashMap<(NodeId, NodeId), LinkId>,
    outgoing: Vec<Vec<LinkId>>,
}

impl Topology {
    pub fn new(labels: Vec<String>, links: Vec<Link>) -> Result<Self, NetworkError> {
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.clone(), i).is_some() {
                return Err(NetworkError::DuplicateNode(l.clone()));
            }
        }
        let n = labels.len();
        let mut index = HashMap::new();
        let mut outgoing = vec![Vec::new(); n];
        for (id, link) in links.iter().enumerate() {
            for node in [link.from, link.to] {
                if node >= n {
                    return Err(NetworkError::UnknownNode(node));
                }
            }
            let (a, b) = (labels[link.from].clone(), labels[link.to].clone());
            if link.from == link.to {
                return Err(NetworkError::SelfLoop(a, b));
            }
            if !(link.capacity > 0.0 && link.capacity.is_finite()) {
                return Err(NetworkError::BadCapacity {
                    from: a,
                    to: b,
                    capacity: link.capacity,
                });
            }
            if index.insert((link.from, link.to), id).is_some() {
                return Err(NetworkError::DuplicateLink(a, b));
            }
            outgoing[link.from].push(id);
        }
        Ok(Self {
            labels,
            links,
            index,
            outgoing,
        })
    }

    /// Nodes labelled `0..n`.
    pub fn with_numbered_nodes(n: usize, links: Vec<Link>) -> Result<Self, NetworkError> {
        Self::new((0..n).map(|i| i.to_string()).collect(), links)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.index.get(&(from, to)).copied()
    }

    pub fn outgoing(&self, node: NodeId) -> &[LinkId] {
        &self.outgoing[node]
    }
}

/// A commodity: packets from `source` to `destination` at `rate` packets/s.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub rate: f64,
}

impl Flow {
    pub fn validate(&self, topology: &Topology) -> Result<(), NetworkError> {
        for node in [self.source, self.destination] {
            if node >= topology.node_count() {
                return Err(NetworkError::UnknownNode(node));
            }
        }
        if self.source == self.destination {
            return Err(NetworkError::FlowLoop(
                self.id,
                topology.label(self.source).to_owned(),
            ));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(NetworkError::BadRate(self.id, self.rate));
        }
        Ok(())
    }
}

/// Link weights used to build the routing directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMetric {
    #[default]
    HopCount,
    /// Weight `1 / capacity`, in seconds per bit.
    InverseCapacity,
}

impl RoutingMetric {
    fn weight(self, link: &Link) -> f64 {
        match self {
            RoutingMetric::HopCount => 1.0,
            RoutingMetric::InverseCapacity => 1.0 / link.capacity,
        }
    }
}

/// Central routing directory: `next_hop(current, destination)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDirectory {
    nodes: usize,
    table: Vec<Option<NodeId>>,
}

impl RoutingDirectory {
    /// Builds a directory from an explicit table, row = current node,
    /// column = destination.
    pub fn from_table(table: Vec<Vec<Option<NodeId>>>) -> Self {
        let nodes = table.len();
        assert!(table.iter().all(|row| row.len() == nodes), "table must be square");
        Self {
            nodes,
            table: table.into_iter().flatten().collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn next_hop(&self, current: NodeId, destination: NodeId) -> Option<NodeId> {
        self.table[current * self.nodes + destination]
    }
}

/// Shortest-path directory under `metric`. Among equally short next hops the
/// lowest node id wins.
pub fn build_routing(topology: &Topology, metric: RoutingMetric) -> RoutingDirectory {
    let n = topology.node_count();
    let mut graph: DiGraph<(), f64> = DiGraph::with_capacity(n, topology.links().len());
    for _ in 0..n {
        graph.add_node(());
    }
    for link in topology.links() {
        graph.add_edge(
            NodeIndex::new(link.from),
            NodeIndex::new(link.to),
            metric.weight(link),
        );
    }

    let mut table = vec![None; n * n];
    for dest in 0..n {
        // distance from every node to `dest`
        let to_dest = dijkstra(Reversed(&graph), NodeIndex::new(dest), None, |e| *e.weight());
        let dist = |v: NodeId| to_dest.get(&NodeIndex::new(v)).copied();
        for current in (0..n).filter(|&c| c != dest) {
            let Some(best) = dist(current) else { continue };
            let tol = 1e-12 * best.abs().max(f64::MIN_POSITIVE);
            table[current * n + dest] = topology
                .outgoing(current)
                .iter()
                .map(|&l| topology.link(l))
                .filter_map(|link| {
                    let via = dist(link.to)? + metric.weight(link);
                    ((via - best).abs() <= tol).then_some(link.to)
                })
                .min();
        }
    }
    RoutingDirectory { nodes: n, table }
}

/// The routed node sequence of a flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Number of links `h`.
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Consecutive `(from, to)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Link ids along the path, or `None` if some pair is not a link.
    pub fn link_ids(&self, topology: &Topology) -> Option<Vec<LinkId>> {
        self.edges().map(|(u, v)| topology.link_between(u, v)).collect()
    }
}

/// Follow the directory from the flow's source. Fails if the walk dead-ends,
/// revisits a node or does not arrive within `N - 1` hops.
pub fn resolve_path(
    topology: &Topology,
    directory: &RoutingDirectory,
    flow: &Flow,
) -> Result<Path, NetworkError> {
    flow.validate(topology)?;
    let unreachable = || NetworkError::Unreachable {
        flow: flow.id,
        origin: topology.label(flow.source).to_owned(),
        destination: topology.label(flow.destination).to_owned(),
    };
    let n = topology.node_count();
    let mut visited = vec![false; n];
    let mut nodes = vec![flow.source];
    visited[flow.source] = true;
    let mut current = flow.source;
    while current != flow.destination {
        let next = directory
            .next_hop(current, flow.destination)
            .ok_or_else(unreachable)?;
        if next >= n || visited[next] || topology.link_between(current, next).is_none() {
            return Err(unreachable());
        }
        visited[next] = true;
        nodes.push(next);
        current = next;
    }
    Ok(Path { nodes })
}

/// Per-link traffic derived from the routed flows.
#[derive(Debug, Clone)]
pub struct LinkState {
    /// 1 / mean packet length, per bit
    mu: f64,
    capacity: Vec<f64>,
    arrival: Vec<f64>,
}

impl LinkState {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mean_packet_bits(&self) -> f64 {
        1.0 / self.mu
    }

    pub fn link_count(&self) -> usize {
        self.arrival.len()
    }

    pub fn capacity(&self, link: LinkId) -> f64 {
        self.capacity[link]
    }

    /// Packet arrival rate λ(u,v).
    pub fn arrival_rate(&self, link: LinkId) -> f64 {
        self.arrival[link]
    }

    /// Service rate μ·c(u,v) in packets per second.
    pub fn service_rate(&self, link: LinkId) -> f64 {
        self.mu * self.capacity[link]
    }

    /// Load ρ(u,v) = λ / (μ c).
    pub fn load(&self, link: LinkId) -> f64 {
        self.arrival[link] / self.service_rate(link)
    }

    /// θ(u,v) = μ c − λ.
    pub fn residual_rate(&self, link: LinkId) -> f64 {
        self.service_rate(link) - self.arrival[link]
    }

    pub fn is_stable(&self, link: LinkId) -> bool {
        self.load(link) < 1.0
    }
}

/// Sum each flow's rate onto every link of its routed path.
pub fn link_arrival_rates(
    topology: &Topology,
    directory: &RoutingDirectory,
    flows: &[Flow],
    mu: f64,
) -> Result<LinkState, NetworkError> {
    let paths = flows
        .iter()
        .map(|f| resolve_path(topology, directory, f))
        .collect::<Result<Vec<_>, _>>()?;
    link_state_from_paths(topology, flows.iter().zip(&paths), mu)
}

pub fn link_state_from_paths<'a>(
    topology: &Topology,
    routed: impl IntoIterator<Item = (&'a Flow, &'a Path)>,
    mu: f64,
) -> Result<LinkState, NetworkError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(NetworkError::BadPacketLength(1.0 / mu));
    }
    let mut arrival = vec![0.0; topology.links().len()];
    for (flow, path) in routed {
        for (u, v) in path.edges() {
            let link = topology.link_between(u, v).ok_or(NetworkError::Unreachable {
                flow: flow.id,
                origin: topology.label(flow.source).to_owned(),
                destination: topology.label(flow.destination).to_owned(),
            })?;
            arrival[link] += flow.rate;
        }
    }
    Ok(LinkState {
        mu,
        capacity: topology.links().iter().map(|l| l.capacity).collect(),
        arrival,
    })
}

/// Links whose offered bit rate λ/μ reaches or exceeds capacity.
pub fn check_stability(state: &LinkState) -> Vec<LinkId> {
    (0..state.link_count())
        .filter(|&l| state.arrival_rate(l) / state.mu() >= state.capacity(l))
        .collect()
}

/// Links with load in `[threshold, 1)`.
pub fn heavily_loaded(state: &LinkState, threshold: f64) -> Vec<LinkId> {
    (0..state.link_count())
        .filter(|&l| {
            let rho = state.load(l);
            rho >= threshold && rho < 1.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(from: NodeId, to: NodeId, capacity: f64) -> Link {
        Link { from, to, capacity }
    }

    /// Four-node example with links (1,2) (1,3) (2,4) (3,4) (1,4) (4,1),
    /// stored 0-based.
    fn four_node() -> Topology {
        let edges = [(1, 2), (1, 3), (2, 4), (3, 4), (1, 4), (4, 1)];
        Topology::new(
            ["1", "2", "3", "4"].map(String::from).to_vec(),
            edges.iter().map(|&(u, v)| link(u - 1, v - 1, 1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn topology_validation() {
        let labels = || vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            Topology::new(labels(), vec![link(0, 0, 1.0)]),
            Err(NetworkError::SelfLoop(..))
        ));
        assert!(matches!(
            Topology::new(labels(), vec![link(0, 1, 0.0)]),
            Err(NetworkError::BadCapacity { .. })
        ));
        assert!(matches!(
            Topology::new(labels(), vec![link(0, 1, 1.0), link(0, 1, 2.0)]),
            Err(NetworkError::DuplicateLink(..))
        ));
        assert!(matches!(
            Topology::new(labels(), vec![link(0, 2, 1.0)]),
            Err(NetworkError::UnknownNode(2))
        ));
        assert!(matches!(
            Topology::new(vec!["a".into(), "a".into()], vec![]),
            Err(NetworkError::DuplicateNode(_))
        ));
    }

    #[test]
    fn four_node_directory_matches_published_table() {
        // Read with rows as the current node and columns as the destination;
        // the transposed reading routes over links that do not exist.
        let expected: [[Option<usize>; 4]; 4] = [
            [None, Some(2), Some(3), Some(4)],
            [Some(4), None, Some(4), Some(4)],
            [Some(4), Some(4), None, Some(4)],
            [Some(1), Some(1), Some(1), None],
        ];
        let dir = build_routing(&four_node(), RoutingMetric::HopCount);
        for cur in 0..4 {
            for dst in 0..4 {
                let got = dir.next_hop(cur, dst).map(|n| n + 1);
                assert_eq!(got, expected[cur][dst], "current {} dest {}", cur + 1, dst + 1);
            }
        }
        assert_eq!(dir.next_hop(1, 2), Some(3)); // node 2 to node 3 goes via 4
    }

    #[test]
    fn four_node_path_follows_directory() {
        let topo = four_node();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        let flow = Flow { id: 0, source: 1, destination: 2, rate: 1.0 };
        let path = resolve_path(&topo, &dir, &flow).unwrap();
        // 2 -> 4 -> 1 -> 3
        assert_eq!(path.nodes(), &[1, 3, 0, 2]);
        assert_eq!(path.hops(), 3);
    }

    #[test]
    fn single_link() {
        let topo = Topology::with_numbered_nodes(2, vec![link(0, 1, 5.0)]).unwrap();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        assert_eq!(dir.next_hop(0, 1), Some(1));
        assert_eq!(dir.next_hop(1, 0), None);
        let flow = Flow { id: 3, source: 0, destination: 1, rate: 1.0 };
        assert_eq!(resolve_path(&topo, &dir, &flow).unwrap().nodes(), &[0, 1]);
        let back = Flow { id: 4, source: 1, destination: 0, rate: 1.0 };
        assert!(matches!(
            resolve_path(&topo, &dir, &back),
            Err(NetworkError::Unreachable { flow: 4, .. })
        ));
    }

    #[test]
    fn ties_break_to_lowest_next_hop() {
        // 0 -> {2, 1} -> 3, both two hops
        let topo = Topology::with_numbered_nodes(
            4,
            vec![link(0, 2, 1.0), link(0, 1, 1.0), link(2, 3, 1.0), link(1, 3, 1.0)],
        )
        .unwrap();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        assert_eq!(dir.next_hop(0, 3), Some(1));
    }

    #[test]
    fn inverse_capacity_prefers_fast_links() {
        // direct slow link vs two fast hops
        let topo = Topology::with_numbered_nodes(
            3,
            vec![link(0, 2, 1.0), link(0, 1, 100.0), link(1, 2, 100.0)],
        )
        .unwrap();
        assert_eq!(build_routing(&topo, RoutingMetric::HopCount).next_hop(0, 2), Some(2));
        assert_eq!(
            build_routing(&topo, RoutingMetric::InverseCapacity).next_hop(0, 2),
            Some(1)
        );
    }

    #[test]
    fn resolve_rejects_looping_directory() {
        let topo = Topology::with_numbered_nodes(
            3,
            vec![link(0, 1, 1.0), link(1, 0, 1.0), link(1, 2, 1.0)],
        )
        .unwrap();
        let dir = RoutingDirectory::from_table(vec![
            vec![None, Some(1), Some(1)],
            vec![Some(0), None, Some(0)],
            vec![None, None, None],
        ]);
        let flow = Flow { id: 0, source: 0, destination: 2, rate: 1.0 };
        assert!(resolve_path(&topo, &dir, &flow).is_err());
    }

    #[test]
    fn shared_link_rates_add() {
        let topo = Topology::with_numbered_nodes(
            3,
            vec![link(0, 1, 10.0), link(1, 2, 10.0)],
        )
        .unwrap();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        let flows = [
            Flow { id: 0, source: 0, destination: 1, rate: 1.0 },
            Flow { id: 1, source: 0, destination: 2, rate: 2.0 },
        ];
        let state = link_arrival_rates(&topo, &dir, &flows, 0.5).unwrap();
        assert_eq!(state.arrival_rate(0), 3.0);
        assert_eq!(state.arrival_rate(1), 2.0);
        assert_eq!(state.service_rate(0), 5.0);
        assert_eq!(state.load(0), 0.6);
        assert_eq!(state.residual_rate(1), 3.0);
    }

    #[test]
    fn tandem_links_carry_the_flow_rate() {
        let topo = Topology::with_numbered_nodes(3, vec![link(0, 1, 1.0), link(1, 2, 1.0)]).unwrap();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        let flows = [Flow { id: 0, source: 0, destination: 2, rate: 0.37 }];
        let state = link_arrival_rates(&topo, &dir, &flows, 1.0).unwrap();
        assert_eq!(state.arrival_rate(0), 0.37);
        assert_eq!(state.arrival_rate(1), 0.37);
    }

    #[test]
    fn stability_boundaries() {
        let topo = Topology::with_numbered_nodes(3, vec![link(0, 1, 1.0), link(1, 2, 1.0)]).unwrap();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        let at = |rate: f64, to: NodeId| {
            let flows = [Flow { id: 0, source: 0, destination: to, rate }];
            link_arrival_rates(&topo, &dir, &flows, 1.0).unwrap()
        };
        assert!(check_stability(&at(0.99, 2)).is_empty());
        assert_eq!(check_stability(&at(1.0, 1)), vec![0]);
        assert_eq!(check_stability(&at(1.01, 2)), vec![0, 1]);
        assert_eq!(heavily_loaded(&at(0.96, 1), HIGH_LOAD_WARNING), vec![0]);
    }

    #[test]
    fn flow_validation() {
        let topo = four_node();
        let dir = build_routing(&topo, RoutingMetric::HopCount);
        let bad = Flow { id: 9, source: 0, destination: 0, rate: 1.0 };
        assert!(matches!(resolve_path(&topo, &dir, &bad), Err(NetworkError::FlowLoop(9, _))));
        let bad = Flow { id: 9, source: 0, destination: 1, rate: 0.0 };
        assert!(matches!(resolve_path(&topo, &dir, &bad), Err(NetworkError::BadRate(9, _))));
    }
}
