use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use psn_delay::approx::Method;
use psn_delay::commands::{
    cmd_approx, cmd_compare, cmd_simulate, sweep_approx, sweep_compare, sweep_simulate,
    CommandError,
};
use psn_delay::scenario::{load_scenario, Scenario};
use psn_delay::topogen::{generate_topology, GeneratorSpec, Tier};

/// End-to-end delay approximation (AKIA and KIA) and packet-level simulation.
///
/// Exit codes: 0 success, 1 I/O or internal failure, 2 invalid input,
/// 3 unstable network.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-flow phase-type parameters and moments under both methods.
    Approx(RunArgs),
    /// Simulate the scenario and write delay samples.
    Simulate(RunArgs),
    /// Simulate, then compare both approximations with the samples.
    Compare(RunArgs),
    /// Generate a tiered topology with suggested flows as a scenario file.
    GenTopology(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to the scenario's `output` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Simulation mode, overriding the scenario.
    #[arg(long)]
    mode: Option<Method>,
    /// Rescale flow rates so the busiest link runs at each of these loads.
    #[arg(long, value_delimiter = ',')]
    rho_sweep: Option<Vec<f64>>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    flows: Option<usize>,
    /// Flow rate in bits per second.
    #[arg(long, default_value_t = 2e6)]
    flow_rate_bps: f64,
    #[arg(long, default_value_t = 186.0)]
    mean_packet_bytes: f64,
    #[arg(long, default_value_t = 20.0)]
    sim_seconds: f64,
    /// Tier capacities in bits per second, fastest first.
    #[arg(long, value_delimiter = ',')]
    tier_capacities: Option<Vec<f64>>,
    /// Node share of each tier, same order as the capacities.
    #[arg(long, value_delimiter = ',')]
    tier_shares: Option<Vec<f64>>,
    /// Scenario file to write; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<(Scenario, PathBuf), CommandError> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        s.sim.seed = seed;
    }
    if let Some(mode) = args.mode {
        s.sim.mode = mode;
    }
    for w in &s.warnings {
        warn!("{w}");
    }
    let out = args
        .out
        .clone()
        .or_else(|| s.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((s, out))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Approx(a) => {
            let (s, out) = load(&a)?;
            match &a.rho_sweep {
                Some(rhos) => sweep_approx(&s, &out, rhos),
                None => cmd_approx(&s, &out).map(drop),
            }
        }
        Command::Simulate(a) => {
            let (s, out) = load(&a)?;
            match &a.rho_sweep {
                Some(rhos) => sweep_simulate(&s, &out, rhos, a.reps),
                None => cmd_simulate(&s, &out, a.reps).map(drop),
            }
        }
        Command::Compare(a) => {
            let (s, out) = load(&a)?;
            match &a.rho_sweep {
                Some(rhos) => sweep_compare(&s, &out, rhos, a.reps).map(drop),
                None => cmd_compare(&s, &out, a.reps).map(drop),
            }
        }
        Command::GenTopology(g) => {
            let mut spec = GeneratorSpec::new(g.nodes, g.seed);
            if let Some(n) = g.flows {
                spec.flows = n;
            }
            spec.flow_rate_bps = g.flow_rate_bps;
            spec.mean_packet_bytes = g.mean_packet_bytes;
            spec.sim_seconds = g.sim_seconds;
            if let Some(caps) = g.tier_capacities {
                let shares = g.tier_shares.unwrap_or_else(|| vec![1.0; caps.len()]);
                if shares.len() != caps.len() {
                    eprintln!("error: --tier-shares needs one value per tier capacity");
                    std::process::exit(2);
                }
                let last = caps.len() - 1;
                spec.tiers = caps
                    .iter()
                    .zip(&shares)
                    .enumerate()
                    .map(|(i, (&capacity_bps, &share))| Tier {
                        capacity_bps,
                        share,
                        uplinks: if i == last && last > 0 { 1 } else { 2 },
                    })
                    .collect();
            }
            let file = match generate_topology(&spec) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    std::process::exit(2);
                }
            };
            let text = file.to_json();
            match g.out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|source| CommandError::Io { path, source }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
