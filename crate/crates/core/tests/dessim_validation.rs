mod common;

use common::*;
use psn_delay::analysis::{batch_means_se, ks_critical_value, sample_mean, sample_std, EmpiricalCcdf};
use psn_delay::approx::Method;
use psn_delay::dessim::{replicate, run_simulation, SimConfig, StopCriterion};
use psn_delay::netmodel::{build_routing, Flow, Link, RoutingDirectory, Topology};

/// Chain of links with the given capacities; packets average one bit.
fn line(capacities: &[f64]) -> (Topology, RoutingDirectory) {
    let links = capacities
        .iter()
        .enumerate()
        .map(|(i, &c)| Link { from: i, to: i + 1, capacity: c })
        .collect();
    let topo = Topology::with_numbered_nodes(capacities.len() + 1, links).unwrap();
    let dir = build_routing(&topo, Default::default());
    (topo, dir)
}

fn through(h: usize, rate: f64) -> Vec<Flow> {
    vec![Flow { id: 0, source: 0, destination: h, rate }]
}

fn delays(caps: &[f64], rate: f64, mode: Method, packets: u64, seed: u64) -> Vec<f64> {
    let (topo, dir) = line(caps);
    let cfg = SimConfig::new(mode, StopCriterion::PacketsPerFlow(packets), 1.0, seed);
    let out = run_simulation(&topo, &dir, &through(caps.len(), rate), &cfg).unwrap();
    out.flows[0].delay.clone()
}

#[test]
fn single_link_mean_sojourn() {
    let xs = delays(&[1.0], 0.5, Method::Akia, 1_000_000, 1);
    let m = sample_mean(&xs);
    assert!((m - 2.0).abs() < 0.02, "mean {m}");
}

#[test]
fn kia_tandem_jitter_at_half_load() {
    let xs = delays(&[1.0, 1.0], 0.5, Method::Kia, 1_000_000, 2);
    let s = sample_std(&xs);
    assert!((s - 8f64.sqrt()).abs() < 0.03, "jitter {s}");
}

#[test]
fn akia_tandem_jitter_at_030() {
    let xs = delays(&[1.0, 1.0], 0.3, Method::Akia, 1_000_000, 3);
    let s = sample_std(&xs);
    assert!((s - 2.64).abs() < 0.03, "jitter {s}");
}

#[test]
fn akia_service_times_scale_with_capacity() {
    let caps = [1.0, 3.0, 0.5];
    let (topo, dir) = line(&caps);
    let mut cfg = SimConfig::new(Method::Akia, StopCriterion::PacketsPerFlow(20_000), 1.0, 4);
    cfg.trace_flow = Some(0);
    let out = run_simulation(&topo, &dir, &through(3, 0.2), &cfg).unwrap();
    assert_eq!(out.trace.len(), 20_000);
    for tr in &out.trace {
        let v0 = tr.service_times[0] * caps[tr.links[0]];
        for (j, &r) in tr.service_times.iter().enumerate() {
            let v = r * caps[tr.links[j]];
            assert!((v - v0).abs() <= 4.0 * f64::EPSILON * v0, "{v} vs {v0}");
        }
    }
}

#[test]
fn kia_lengths_are_uncorrelated_across_hops() {
    let caps = [1.0, 1.0, 1.0];
    let (topo, dir) = line(&caps);
    let mut cfg = SimConfig::new(Method::Kia, StopCriterion::PacketsPerFlow(100_000), 1.0, 5);
    cfg.trace_flow = Some(0);
    let out = run_simulation(&topo, &dir, &through(3, 0.4), &cfg).unwrap();
    let lengths: Vec<Vec<f64>> = out.trace.iter().map(|t| t.service_times.clone()).collect();
    let all: Vec<f64> = lengths.iter().flatten().copied().collect();
    let (m, v) = mean_and_variance(&all);
    let pairs: Vec<(f64, f64)> = lengths
        .iter()
        .flat_map(|l| l.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let r = pairs.iter().map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / pairs.len() as f64 / v;
    assert!(r.abs() < 0.01, "lag-1 autocorrelation {r}");
}

#[test]
fn mm1_sojourn_passes_ks_in_most_runs() {
    let (topo, dir) = line(&[1.0]);
    let rate = 0.5;
    let thin = 25;
    let mut accepted = 0;
    for seed in 0..100 {
        let cfg = SimConfig::new(Method::Akia, StopCriterion::PacketsPerFlow(50_000), 1.0, 1000 + seed);
        let out = run_simulation(&topo, &dir, &through(1, rate), &cfg).unwrap();
        // thinning leaves nearly independent draws
        let xs: Vec<f64> = out.flows[0].delay.iter().step_by(thin).copied().collect();
        let e = EmpiricalCcdf::new(&xs).unwrap();
        let d = e.ks_distance(|t| (-(1.0 - rate) * t).exp());
        if d < ks_critical_value(xs.len(), 0.01) {
            accepted += 1;
        }
    }
    assert!(accepted >= 95, "{accepted}/100 runs accepted");
}

#[test]
fn mm1_mean_within_three_standard_errors() {
    for (i, rho) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let xs = delays(&[1.0], rho, Method::Akia, 1_000_000, 10 + i as u64);
        let se = batch_means_se(&xs, 50);
        let want = 1.0 / (1.0 - rho);
        let m = sample_mean(&xs);
        assert!((m - want).abs() < 3.0 * se, "rho {rho}: {m} vs {want} (se {se})");
    }
}

#[test]
fn packets_are_conserved() {
    let (topo, dir) = line(&[1.0, 2.0]);
    let flows = vec![
        Flow { id: 0, source: 0, destination: 2, rate: 0.4 },
        Flow { id: 1, source: 1, destination: 2, rate: 0.9 },
        Flow { id: 2, source: 0, destination: 1, rate: 0.3 },
    ];
    for mode in [Method::Akia, Method::Kia] {
        let cfg = SimConfig::new(mode, StopCriterion::Seconds(5_000.0), 1.0, 6);
        let out = run_simulation(&topo, &dir, &flows, &cfg).unwrap();
        for f in &out.flows {
            assert_eq!(f.generated, f.delivered + f.in_flight);
            assert_eq!(f.delivered, f.discarded_warmup + f.len() as u64);
            assert!(f.delay.iter().all(|&d| d >= 0.0));
        }
    }
}

#[test]
fn replications_agree_with_a_single_run() {
    let (topo, dir) = line(&[1.0, 1.0]);
    let cfg = SimConfig::new(Method::Akia, StopCriterion::PacketsPerFlow(200_000), 1.0, 7);
    let reps = replicate(&topo, &dir, &through(2, 0.5), &cfg, 8).unwrap();
    let jitters: Vec<f64> = reps.iter().map(|r| sample_std(&r.flows[0].delay)).collect();
    let single = jitters[0];
    let spread = sample_std(&jitters);
    let mean = sample_mean(&jitters);
    assert!((mean - single).abs() < 2.0 * spread, "{mean} vs {single} (sd {spread})");
    let once = run_simulation(&topo, &dir, &through(2, 0.5), &cfg).unwrap();
    assert_eq!(once, reps[0]);
}

#[test]
fn empirical_ccdf_of_exponential_draws() {
    let mut r = rng(8);
    let xs: Vec<f64> = (0..1_000_000).map(|_| draw_bernoulli_exponential_sum(&mut r, &[1.0], &[1.0])).collect();
    let e = EmpiricalCcdf::new(&xs).unwrap();
    let d = e.ks_distance(|t| (-t).exp());
    assert!(d < 0.005, "sup distance {d}");
}
