//! Packet-level store-and-forward simulator.
//!
//! Each directed link is a FIFO single-server queue with an infinite buffer
//! whose service time for a packet of `V` bits is `V / c`. Flows emit
//! Poisson arrivals; packet lengths are exponential with mean `1/μ` bits.
//! Under [`Method::Akia`] a packet keeps its length on every hop; under
//! [`Method::Kia`] the length is redrawn at every hop. Propagation and
//! processing delays are zero.
//!
//! The event set is a binary heap ordered by `(time, insertion sequence)`,
//! so simultaneous events run in the order they were scheduled and a run is
//! a pure function of its inputs and seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::approx::Method;
use crate::netmodel::{
    check_stability, link_state_from_paths, resolve_path, Flow, LinkId, NetworkError,
    RoutingDirectory, Topology,
};
use crate::rng::{derive_seed, exponential, stream, SimRng, StreamTag};

pub const DEFAULT_WARMUP: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no flows to simulate")]
    NoFlows,
    #[error("network is unstable on {} link(s), first {from} -> {to}", links.len())]
    Unstable { links: Vec<LinkId>, from: String, to: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("warmup fraction {0} must lie in [0, 1)")]
    BadWarmup(f64),
    #[error("stop criterion must be positive, got {0}")]
    BadStop(f64),
    #[error("mean packet length {0} bits must be positive")]
    BadPacketLength(f64),
    #[error("replication count must be at least one")]
    NoReplications,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Each flow emits this many packets; the run ends once all are delivered.
    PacketsPerFlow(u64),
    /// Stop at this simulated time; packets still in the network are dropped.
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: Method,
    pub stop: StopCriterion,
    /// Fraction of each flow's deliveries discarded from the front.
    pub warmup: f64,
    pub seed: u64,
    pub mean_packet_bits: f64,
    /// Record per-hop service times for every delivered packet of this flow.
    pub trace_flow: Option<usize>,
}

impl SimConfig {
    pub fn new(mode: Method, stop: StopCriterion, mean_packet_bits: f64, seed: u64) -> Self {
        Self {
            mode,
            stop,
            warmup: DEFAULT_WARMUP,
            seed,
            mean_packet_bits,
            trace_flow: None,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(SimError::BadWarmup(self.warmup));
        }
        match self.stop {
            StopCriterion::PacketsPerFlow(0) => return Err(SimError::BadStop(0.0)),
            StopCriterion::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(SimError::BadStop(s))
            }
            _ => {}
        }
        if !(self.mean_packet_bits > 0.0 && self.mean_packet_bits.is_finite()) {
            return Err(SimError::BadPacketLength(self.mean_packet_bits));
        }
        Ok(())
    }
}

/// Post-warmup end-to-end delays of one flow, in delivery order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowSamples {
    pub flow_id: usize,
    pub seq: Vec<u64>,
    pub birth: Vec<f64>,
    pub delay: Vec<f64>,
    pub generated: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub discarded_warmup: u64,
}

impl FlowSamples {
    pub fn len(&self) -> usize {
        self.delay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delay.is_empty()
    }
}

/// Service times of one delivered packet of the traced flow, per hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopTrace {
    pub seq: u64,
    pub links: Vec<LinkId>,
    pub service_times: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelaySamples {
    /// One entry per input flow, same order.
    pub flows: Vec<FlowSamples>,
    pub end_time: f64,
    pub trace: Vec<HopTrace>,
}

impl DelaySamples {
    pub fn flow(&self, flow_id: usize) -> Option<&FlowSamples> {
        self.flows.iter().find(|f| f.flow_id == flow_id)
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival { flow: usize },
    Departure { link: LinkId },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
struct Packet {
    flow: usize,
    seq: u64,
    birth: f64,
    length: f64,
    hop: usize,
    service: Vec<f64>,
}

struct LinkQueue {
    capacity: f64,
    // head is in service when `busy`
    waiting: VecDeque<usize>,
    busy: bool,
    lengths: SimRng,
    last_departure: f64,
}

struct FlowState {
    links: Vec<LinkId>,
    rate: f64,
    arrivals: SimRng,
    lengths: SimRng,
    emitted: u64,
    delivered: Vec<(u64, f64, f64)>,
}

struct Engine<'a> {
    config: &'a SimConfig,
    mu: f64,
    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    links: Vec<LinkQueue>,
    flows: Vec<FlowState>,
    packets: Vec<Packet>,
    free: Vec<usize>,
    trace: Vec<HopTrace>,
}

impl Engine<'_> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn emit_more(&self, flow: usize) -> bool {
        match self.config.stop {
            StopCriterion::PacketsPerFlow(n) => self.flows[flow].emitted < n,
            StopCriterion::Seconds(_) => true,
        }
    }

    fn alloc(&mut self, packet: Packet) -> usize {
        match self.free.pop() {
            Some(slot) => {
                self.packets[slot] = packet;
                slot
            }
            None => {
                self.packets.push(packet);
                self.packets.len() - 1
            }
        }
    }

    fn on_arrival(&mut self, flow: usize) {
        let mu = self.mu;
        let state = &mut self.flows[flow];
        let length = exponential(&mut state.lengths, mu);
        let seq = state.emitted;
        state.emitted += 1;
        let first = state.links[0];
        let gap = exponential(&mut state.arrivals, state.rate);
        let tracing = self.config.trace_flow.is_some_and(|f| f == flow);
        let packet = Packet {
            flow,
            seq,
            birth: self.now,
            length,
            hop: 0,
            service: if tracing { Vec::with_capacity(4) } else { Vec::new() },
        };
        let slot = self.alloc(packet);
        self.enqueue(first, slot);
        if self.emit_more(flow) {
            self.schedule(self.now + gap, EventKind::Arrival { flow });
        }
    }

    fn enqueue(&mut self, link: LinkId, slot: usize) {
        self.links[link].waiting.push_back(slot);
        if !self.links[link].busy {
            self.start_service(link);
        }
    }

    fn start_service(&mut self, link: LinkId) {
        let Some(&slot) = self.links[link].waiting.front() else {
            return;
        };
        let queue = &mut self.links[link];
        queue.busy = true;
        let packet = &mut self.packets[slot];
        if self.config.mode == Method::Kia && packet.hop > 0 {
            packet.length = exponential(&mut queue.lengths, self.mu);
        }
        let service = packet.length / queue.capacity;
        if self.config.trace_flow.is_some_and(|f| f == packet.flow) {
            packet.service.push(service);
        }
        self.schedule(self.now + service, EventKind::Departure { link });
    }

    fn on_departure(&mut self, link: LinkId) {
        let queue = &mut self.links[link];
        debug_assert!(queue.busy);
        debug_assert!(self.now >= queue.last_departure, "FIFO order violated");
        queue.last_departure = self.now;
        let slot = queue.waiting.pop_front().expect("departure from empty link");
        queue.busy = false;
        if !queue.waiting.is_empty() {
            self.start_service(link);
        }

        let packet = &mut self.packets[slot];
        packet.hop += 1;
        let flow = &mut self.flows[packet.flow];
        if packet.hop < flow.links.len() {
            let next = flow.links[packet.hop];
            self.enqueue(next, slot);
            return;
        }
        flow.delivered.push((packet.seq, packet.birth, self.now - packet.birth));
        if self.config.trace_flow.is_some_and(|f| f == packet.flow) {
            self.trace.push(HopTrace {
                seq: packet.seq,
                links: flow.links.clone(),
                service_times: std::mem::take(&mut packet.service),
            });
        }
        self.free.push(slot);
    }

    fn run(&mut self) {
        let horizon = match self.config.stop {
            StopCriterion::Seconds(s) => s,
            StopCriterion::PacketsPerFlow(_) => f64::INFINITY,
        };
        while let Some(event) = self.events.pop() {
            if event.time > horizon {
                self.now = horizon;
                break;
            }
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            match event.kind {
                EventKind::Arrival { flow } => self.on_arrival(flow),
                EventKind::Departure { link } => self.on_departure(link),
            }
        }
    }
}

/// One simulation run. Requires a stable network and routable flows.
pub fn run_simulation(
    topology: &Topology,
    directory: &RoutingDirectory,
    flows: &[Flow],
    config: &SimConfig,
) -> Result<DelaySamples, SimError> {
    config.validate()?;
    if flows.is_empty() {
        return Err(SimError::NoFlows);
    }
    let paths = flows
        .iter()
        .map(|f| resolve_path(topology, directory, f))
        .collect::<Result<Vec<_>, _>>()?;
    let mu = 1.0 / config.mean_packet_bits;
    let state = link_state_from_paths(topology, flows.iter().zip(&paths), mu)?;
    let overloaded = check_stability(&state);
    if let Some(&first) = overloaded.first() {
        let link = topology.link(first);
        return Err(SimError::Unstable {
            links: overloaded,
            from: topology.label(link.from).to_owned(),
            to: topology.label(link.to).to_owned(),
        });
    }

    let seed = config.seed;
    let links = topology
        .links()
        .iter()
        .enumerate()
        .map(|(id, l)| LinkQueue {
            capacity: l.capacity,
            waiting: VecDeque::new(),
            busy: false,
            lengths: stream(seed, StreamTag::LinkLengths, id as u64),
            last_departure: 0.0,
        })
        .collect();
    let flow_states = flows
        .iter()
        .zip(&paths)
        .map(|(f, p)| FlowState {
            links: p.link_ids(topology).expect("resolved path uses existing links"),
            rate: f.rate,
            arrivals: stream(seed, StreamTag::FlowArrivals, f.id as u64),
            lengths: stream(seed, StreamTag::FlowLengths, f.id as u64),
            emitted: 0,
            delivered: Vec::new(),
        })
        .collect();

    let trace_index = config
        .trace_flow
        .and_then(|id| flows.iter().position(|f| f.id == id));
    let engine_config = SimConfig {
        trace_flow: trace_index,
        ..config.clone()
    };
    let mut engine = Engine {
        config: &engine_config,
        mu,
        now: 0.0,
        seq: 0,
        events: BinaryHeap::new(),
        links,
        flows: flow_states,
        packets: Vec::new(),
        free: Vec::new(),
        trace: Vec::new(),
    };
    for i in 0..flows.len() {
        let first = exponential(&mut engine.flows[i].arrivals, flows[i].rate);
        engine.schedule(first, EventKind::Arrival { flow: i });
    }
    engine.run();

    let end_time = engine.now;
    let trace = std::mem::take(&mut engine.trace);
    let out = engine
        .flows
        .into_iter()
        .zip(flows)
        .map(|(state, flow)| {
            let delivered = state.delivered.len() as u64;
            let skip = (config.warmup * delivered as f64).floor() as usize;
            let kept = &state.delivered[skip..];
            FlowSamples {
                flow_id: flow.id,
                seq: kept.iter().map(|d| d.0).collect(),
                birth: kept.iter().map(|d| d.1).collect(),
                delay: kept.iter().map(|d| d.2).collect(),
                generated: state.emitted,
                delivered,
                in_flight: state.emitted - delivered,
                discarded_warmup: skip as u64,
            }
        })
        .collect();
    Ok(DelaySamples {
        flows: out,
        end_time,
        trace,
    })
}

/// Seed of replication `index`. Replication 0 uses the base seed itself.
pub fn replication_seed(base: u64, index: usize) -> u64 {
    if index == 0 {
        base
    } else {
        derive_seed(base, StreamTag::Replication, index as u64)
    }
}

/// `n` independent runs, executed in parallel, returned in index order.
pub fn replicate(
    topology: &Topology,
    directory: &RoutingDirectory,
    flows: &[Flow],
    config: &SimConfig,
    n: usize,
) -> Result<Vec<DelaySamples>, SimError> {
    if n == 0 {
        return Err(SimError::NoReplications);
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                seed: replication_seed(config.seed, i),
                ..config.clone()
            };
            run_simulation(topology, directory, flows, &cfg)
        })
        .collect()
}
