//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct construction: Σ Bernoulli(p_f)·Exp(θ_f), drawn with the
/// standard library's log rather than the crate's sampler.
pub fn draw_bernoulli_exponential_sum(rng: &mut impl Rng, probs: &[f64], rates: &[f64]) -> f64 {
    let mut z = 0.0;
    for (&p, &theta) in probs.iter().zip(rates) {
        if rng.random::<f64>() < p {
            let u: f64 = rng.random();
            z += -(1.0 - u).ln() / theta;
        }
    }
    z
}

/// Empirical P(Z > t) and its binomial standard error at the model value.
pub fn tail_fraction(samples: &[f64], t: f64) -> f64 {
    samples.iter().filter(|&&z| z > t).count() as f64 / samples.len() as f64
}

pub fn binomial_se(prob: f64, n: usize) -> f64 {
    (prob * (1.0 - prob) / n as f64).sqrt()
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    // panel first so that a bounded recursion depth still resolves the
    // integrand; cancellation noise near the origin would otherwise keep
    // the refinement going forever
    let panels = 256;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
            recurse(f, lo, flo, hi, fhi, whole, m, fm, tol / panels as f64, 12)
        })
        .sum()
}

pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the sample variance, from the fourth central moment.
pub fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mean, var) = mean_and_variance(xs);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    ((m4 - var * var) / n).sqrt()
}

/// Shortest hop counts from every node by breadth-first search over an
/// adjacency list; `None` where unreachable.
pub fn bfs_hops(adjacency: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.len()];
    let mut queue = std::collections::VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

use psn_delay::netmodel::{build_routing, link_arrival_rates, Flow, Link, LinkState, Path, RoutingMetric, Topology};

/// Mean packet length used by [`chain`], in bits.
pub const CHAIN_PACKET_BITS: f64 = 1000.0;

/// A chain `0 -> 1 -> ... -> h` with the given capacities, one flow over the
/// whole chain and one-hop cross traffic topping each link up to its target
/// load. The through flow carries `share` of the least loaded link's traffic.
pub fn chain(capacities: &[f64], loads: &[f64], share: f64) -> (Topology, Path, LinkState) {
    let h = capacities.len();
    assert_eq!(h, loads.len());
    let mu = 1.0 / CHAIN_PACKET_BITS;
    let links = (0..h)
        .map(|i| Link { from: i, to: i + 1, capacity: capacities[i] })
        .collect();
    let topo = Topology::with_numbered_nodes(h + 1, links).unwrap();
    let dir = build_routing(&topo, RoutingMetric::HopCount);
    let offered: Vec<f64> = (0..h).map(|i| loads[i] * mu * capacities[i]).collect();
    let through = share * offered.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut flows = vec![Flow { id: 0, source: 0, destination: h, rate: through }];
    for (i, &o) in offered.iter().enumerate() {
        let cross = o - through;
        if cross > 1e-9 * o {
            flows.push(Flow { id: i + 1, source: i, destination: i + 1, rate: cross });
        }
    }
    let state = link_arrival_rates(&topo, &dir, &flows, mu).unwrap();
    (topo, Path::new((0..=h).collect()), state)
}

/// Random chain parameters: capacities log-uniform in [1e4, 1e7] bits/s and
/// loads in [0.01, 0.95].
pub fn random_chain(rng: &mut impl Rng, h: usize) -> (Topology, Path, LinkState) {
    let caps: Vec<f64> = (0..h).map(|_| 10f64.powf(rng.random_range(4.0..7.0))).collect();
    let loads: Vec<f64> = (0..h).map(|_| rng.random_range(0.01..0.95)).collect();
    chain(&caps, &loads, rng.random_range(0.05..=1.0))
}
