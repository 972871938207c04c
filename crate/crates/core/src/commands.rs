//! The `approx`, `simulate` and `compare` pipelines and their output files.
//!
//! Every table is tab separated with a header row; real numbers are printed
//! with nine significant digits. Each run also writes `run.json` with the
//! seed, crate version and modelling assumptions. Outputs depend only on the
//! scenario and seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    crossing_point, flow_report, log_grid, region_classify, AnalysisError, EmpiricalCcdf,
    FlowReport, Region, RegionSummary,
};
use crate::approx::{
    akia_approximation, kia_approximation, ApproxError, FlowApproximation, ASSUMPTIONS,
};
use crate::dessim::{replicate, DelaySamples, SimError, StopCriterion};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("flow {flow}: {source}")]
    Approx { flow: usize, source: ApproxError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("flow {flow}: {source}")]
    Analysis { flow: usize, source: AnalysisError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CommandError {
    /// 2 for invalid input, 3 for an unstable network, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Scenario(e) => e.exit_code(),
            CommandError::Sim(SimError::Unstable { .. }) => 3,
            CommandError::Approx { source: ApproxError::UnstableLink { .. }, .. } => 3,
            CommandError::Sim(_) => 2,
            _ => 1,
        }
    }
}

/// Nine significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

fn io_err(path: &FsPath) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_owned(), source }
}

fn write_table(
    path: &FsPath,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CommandError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let emit = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join("\t"))?;
        for row in rows {
            writeln!(w, "{}", row.join("\t"))?;
        }
        w.flush()
    };
    emit().map_err(io_err(path))
}

fn write_metadata(
    out: &FsPath,
    command: &str,
    scenario: &Scenario,
    extra: serde_json::Value,
) -> Result<(), CommandError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let stop = match scenario.sim.stop {
        StopCriterion::PacketsPerFlow(n) => json!({ "packets_per_flow": n }),
        StopCriterion::Seconds(s) => json!({ "seconds": s }),
    };
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": scenario.sim.seed,
        "mode": scenario.sim.mode,
        "stop": stop,
        "warmup": scenario.sim.warmup,
        "mean_packet_bits": scenario.mean_packet_bits(),
        "routing": scenario.routing,
        "nodes": scenario.topology.node_count(),
        "links": scenario.topology.links().len(),
        "flows": scenario.flows.len(),
        "max_link_load": scenario.max_load(),
        "warnings": scenario.warnings,
        "assumptions": ASSUMPTIONS,
        "details": extra,
    });
    let path = out.join("run.json");
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// AKIA and KIA approximations for one flow.
#[derive(Debug, Clone)]
pub struct FlowPair {
    pub akia: FlowApproximation,
    pub kia: FlowApproximation,
}

pub fn approximations(scenario: &Scenario) -> Result<Vec<FlowPair>, CommandError> {
    let state = scenario.link_state();
    scenario
        .flows
        .par_iter()
        .zip(&scenario.paths)
        .map(|(f, p)| {
            let wrap = |source| CommandError::Approx { flow: f.id, source };
            Ok(FlowPair {
                akia: akia_approximation(f.id, &scenario.topology, p, &state).map_err(wrap)?,
                kia: kia_approximation(f.id, &scenario.topology, p, &state).map_err(wrap)?,
            })
        })
        .collect()
}

fn approx_ccdf_rows(pair: &FlowPair) -> Vec<Vec<String>> {
    let mean = pair.akia.mean;
    log_grid(mean * 1e-3, mean * 30.0, 200)
        .into_iter()
        .map(|t| {
            vec![
                num(t),
                num(pair.akia.params.ccdf(t).expect("t >= 0")),
                num(pair.kia.params.ccdf(t).expect("t >= 0")),
            ]
        })
        .collect()
}

/// Writes `approx.tsv`, one row per flow and method, and
/// `ccdf/approx_flow<id>.tsv`.
pub fn cmd_approx(scenario: &Scenario, out: &FsPath) -> Result<Vec<FlowPair>, CommandError> {
    let pairs = approximations(scenario)?;
    let topo = &scenario.topology;
    let rows = scenario.flows.iter().zip(&pairs).flat_map(|(f, pair)| {
        [&pair.akia, &pair.kia].map(|a| {
            vec![
                f.id.to_string(),
                topo.label(f.source).to_owned(),
                topo.label(f.destination).to_owned(),
                a.hops().to_string(),
                a.method.to_string(),
                num(a.mean),
                num(a.jitter),
                a.compound_capacity.map_or("-".into(), num),
                list(a.params.probs()),
                list(a.params.nominal_rates()),
            ]
        })
    });
    write_table(
        &out.join("approx.tsv"),
        &["flow", "src", "dst", "hops", "method", "mean_s", "jitter_s", "compound_capacity_bps", "p", "theta"],
        rows,
    )?;
    for (f, pair) in scenario.flows.iter().zip(&pairs) {
        write_table(
            &out.join("ccdf").join(format!("approx_flow{}.tsv", f.id)),
            &["t_s", "akia", "kia"],
            approx_ccdf_rows(pair),
        )?;
    }
    write_metadata(out, "approx", scenario, json!({}))?;
    Ok(pairs)
}

pub fn simulations(scenario: &Scenario, reps: usize) -> Result<Vec<DelaySamples>, CommandError> {
    Ok(replicate(
        &scenario.topology,
        &scenario.directory,
        &scenario.flows,
        &scenario.sim,
        reps,
    )?)
}

/// Writes `samples_rep<i>.tsv` (flow, seq, birth, delay) per replication and
/// `sim_summary.tsv`.
pub fn cmd_simulate(
    scenario: &Scenario,
    out: &FsPath,
    reps: usize,
) -> Result<Vec<DelaySamples>, CommandError> {
    let runs = simulations(scenario, reps)?;
    let mut summary = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        let rows = run.flows.iter().flat_map(|f| {
            (0..f.len()).map(move |i| {
                vec![f.flow_id.to_string(), f.seq[i].to_string(), num(f.birth[i]), num(f.delay[i])]
            })
        });
        write_table(
            &out.join(format!("samples_rep{r}.tsv")),
            &["flow", "seq", "birth_s", "delay_s"],
            rows,
        )?;
        for f in &run.flows {
            summary.push(vec![
                r.to_string(),
                f.flow_id.to_string(),
                f.len().to_string(),
                num(crate::analysis::sample_mean(&f.delay)),
                num(crate::analysis::sample_std(&f.delay)),
                f.generated.to_string(),
                f.delivered.to_string(),
                f.in_flight.to_string(),
                f.discarded_warmup.to_string(),
            ]);
        }
    }
    write_table(
        &out.join("sim_summary.tsv"),
        &["rep", "flow", "samples", "mean_s", "jitter_s", "generated", "delivered", "in_flight", "warmup_discarded"],
        summary,
    )?;
    let seeds: Vec<u64> = (0..reps)
        .map(|i| crate::dessim::replication_seed(scenario.sim.seed, i))
        .collect();
    write_metadata(out, "simulate", scenario, json!({ "replication_seeds": seeds }))?;
    Ok(runs)
}

/// Reports for every replication, in (replication, flow) order.
pub fn compare_runs(
    pairs: &[FlowPair],
    runs: &[DelaySamples],
) -> Result<Vec<(usize, FlowReport)>, CommandError> {
    let jobs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..pairs.len()).map(move |i| (r, i)))
        .collect();
    jobs.par_iter()
        .map(|&(r, i)| {
            let pair = &pairs[i];
            let flow = pair.akia.flow_id;
            let samples = &runs[r].flows[i].delay;
            flow_report(samples, &pair.akia, &pair.kia)
                .map(|rep| (r, rep))
                .map_err(|source| CommandError::Analysis { flow, source })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<(usize, FlowReport)>,
    pub summary: RegionSummary,
}

fn report_row(rep: usize, r: &FlowReport) -> Vec<String> {
    vec![
        rep.to_string(),
        r.flow_id.to_string(),
        r.hops.to_string(),
        r.samples.to_string(),
        num(r.sim_mean),
        num(r.sim_jitter),
        num(r.akia_mean),
        num(r.akia_jitter),
        num(r.kia_jitter),
        num(r.eps_akia),
        num(r.eps_kia),
        num(r.nll_akia),
        num(r.nll_kia),
        num(r.delta_nll),
        r.region.to_string(),
    ]
}

/// Column order of `report.tsv`.
pub const REPORT_COLUMNS: [&str; 15] = [
    "rep", "flow", "hops", "samples", "sim_mean_s", "sim_jitter_s", "approx_mean_s",
    "akia_jitter_s", "kia_jitter_s", "eps_akia", "eps_kia", "nll_akia", "nll_kia",
    "delta_nll", "region",
];

/// Writes `report.tsv`, `ccdf/compare_flow<id>.tsv` (empirical ccdf of the
/// first replication next to both models) and region counts in `run.json`.
pub fn cmd_compare(scenario: &Scenario, out: &FsPath, reps: usize) -> Result<Comparison, CommandError> {
    let pairs = approximations(scenario)?;
    let runs = simulations(scenario, reps)?;
    let reports = compare_runs(&pairs, &runs)?;
    write_table(
        &out.join("report.tsv"),
        &REPORT_COLUMNS,
        reports.iter().map(|(rep, r)| report_row(*rep, r)),
    )?;

    let curves: Vec<Vec<Vec<String>>> = pairs
        .par_iter()
        .zip(&runs[0].flows)
        .map(|(pair, samples)| {
            let emp = EmpiricalCcdf::new(&samples.delay)
                .map_err(|source| CommandError::Analysis { flow: pair.akia.flow_id, source })?;
            let mean = pair.akia.mean;
            Ok(log_grid(mean * 1e-3, mean * 30.0, 200)
                .into_iter()
                .map(|t| {
                    vec![
                        num(t),
                        num(emp.eval(t)),
                        num(pair.akia.params.ccdf(t).expect("t >= 0")),
                        num(pair.kia.params.ccdf(t).expect("t >= 0")),
                    ]
                })
                .collect())
        })
        .collect::<Result<_, CommandError>>()?;
    for (pair, rows) in pairs.iter().zip(curves) {
        write_table(
            &out.join("ccdf").join(format!("compare_flow{}.tsv", pair.akia.flow_id)),
            &["t_s", "empirical", "akia", "kia"],
            rows,
        )?;
    }

    let all: Vec<FlowReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let summary = region_classify(&all);
    write_metadata(
        out,
        "compare",
        scenario,
        json!({
            "replications": reps,
            "region_summary": summary,
        }),
    )?;
    Ok(Comparison { reports, summary })
}

/// Output directory for one load of a sweep.
fn rho_dir(out: &FsPath, rho: f64) -> PathBuf {
    out.join(format!("rho_{rho}"))
}

/// Runs `cmd_approx` at each load and writes `sweep.tsv`.
pub fn sweep_approx(scenario: &Scenario, out: &FsPath, rhos: &[f64]) -> Result<(), CommandError> {
    let mut rows = Vec::new();
    for &rho in rhos {
        let s = scenario.scaled_to_load(rho)?;
        for pair in cmd_approx(&s, &rho_dir(out, rho))? {
            rows.push(vec![
                num(rho),
                pair.akia.flow_id.to_string(),
                num(pair.akia.mean),
                num(pair.akia.jitter),
                num(pair.kia.jitter),
            ]);
        }
    }
    write_table(
        &out.join("sweep.tsv"),
        &["rho", "flow", "mean_s", "akia_jitter_s", "kia_jitter_s"],
        rows,
    )?;
    write_metadata(out, "approx --rho-sweep", scenario, json!({ "rho": rhos }))
}

pub fn sweep_simulate(
    scenario: &Scenario,
    out: &FsPath,
    rhos: &[f64],
    reps: usize,
) -> Result<(), CommandError> {
    for &rho in rhos {
        let s = scenario.scaled_to_load(rho)?;
        cmd_simulate(&s, &rho_dir(out, rho), reps)?;
    }
    write_metadata(out, "simulate --rho-sweep", scenario, json!({ "rho": rhos }))
}

/// Runs `cmd_compare` at each load, writes `sweep.tsv` and, per multi-hop
/// flow, the interpolated load where `eps_akia - eps_kia` turns
/// non-negative (`crossing.tsv`, first replication).
pub fn sweep_compare(
    scenario: &Scenario,
    out: &FsPath,
    rhos: &[f64],
    reps: usize,
) -> Result<Vec<(f64, Comparison)>, CommandError> {
    let mut results = Vec::new();
    for &rho in rhos {
        let s = scenario.scaled_to_load(rho)?;
        results.push((rho, cmd_compare(&s, &rho_dir(out, rho), reps)?));
    }
    let mut rows = Vec::new();
    for (rho, c) in &results {
        for (rep, r) in &c.reports {
            let mut row = vec![num(*rho)];
            row.extend(report_row(*rep, r));
            rows.push(row);
        }
    }
    let mut header = vec!["rho"];
    header.extend(REPORT_COLUMNS);
    write_table(&out.join("sweep.tsv"), &header, rows)?;

    let mut crossings = Vec::new();
    for (i, flow) in scenario.flows.iter().enumerate() {
        let first: Vec<&FlowReport> = results
            .iter()
            .map(|(_, c)| &c.reports[i].1)
            .collect();
        if first.iter().any(|r| r.region == Region::IdenticalByConstruction) {
            continue;
        }
        let diff: Vec<f64> = first.iter().map(|r| r.eps_akia - r.eps_kia).collect();
        let tip = crossing_point(rhos, &diff);
        crossings.push(vec![flow.id.to_string(), tip.map_or("none".into(), num)]);
    }
    write_table(&out.join("crossing.tsv"), &["flow", "rho_tip"], crossings)?;
    write_metadata(out, "compare --rho-sweep", scenario, json!({ "rho": rhos, "replications": reps }))?;
    Ok(results)
}
