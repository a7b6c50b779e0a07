use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, Subcommand};
use log::{info, warn};

use secinfer::harness::{emit_monte_carlo, emit_outputs, prepare, run_prepared, RunError, ScenarioConfig};
use secinfer::measurement::{assign_sectors, sector_selector_spec};
use secinfer::topology::{
    connected_random_geometric_graph, is_connected, is_globally_observable, laplacian, read_edge_list,
    read_positions_csv, write_edge_list, write_positions_csv,
};

use crate::input::{parse_seeds, Seeds};
use crate::{Classify, Failure};

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario: desk-none, desk-strong, desk-weak, full-none, full-strong, full-weak.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig, Failure> {
        match (&self.config, &self.preset) {
            (Some(p), _) => ScenarioConfig::load(p).config(),
            (None, Some(name)) => {
                ScenarioConfig::preset(name).ok_or_else(|| Failure::Config(anyhow!("unknown preset {name:?}")))
            }
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

fn classify(e: RunError) -> Failure {
    if e.is_config_error() {
        Failure::Config(e.into())
    } else {
        Failure::Runtime(e.into())
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut config = a.source.load()?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let prepared = prepare(&config).map_err(classify)?;
    for w in &prepared.warnings {
        warn!("{w}");
    }
    info!(
        "gains alpha={} beta={} r1={} rho={}",
        prepared.alpha, prepared.beta, prepared.r1, prepared.spectral_radius
    );
    let result = prepared.run(prepared.config.seed, true).map_err(classify)?;
    for w in &result.warnings {
        warn!("{w}");
    }
    let files = emit_outputs(&result, &a.out).runtime()?;
    let s = &result.summary;
    println!("outcome: {}", s.outcome.as_str());
    println!("max final relative error: {:.6e}", s.max_final_error);
    println!(
        "flagged nodes: {} (first detection: {})",
        s.detected_nodes,
        s.first_detection.map_or("none".into(), |t| t.to_string())
    );
    println!(
        "center component error: min {:.4}, max {:.4}",
        s.min_center_error, s.max_center_error
    );
    println!(
        "SNR: mean per node {:.1} dB, network {:.1} dB",
        s.mean_snr_db, s.network_snr_db
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct McArgs {
    #[command(flatten)]
    source: Source,
    /// Seed range, `a..b` (half-open) or `a..=b`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Seeds,
    /// Directory for `mc_summary.csv` and the resolved config.
    #[arg(long)]
    out: PathBuf,
}

pub fn mc(a: McArgs) -> Result<(), Failure> {
    let config = a.source.load()?;
    let prepared = prepare(&config).map_err(classify)?;
    for w in &prepared.warnings {
        warn!("{w}");
    }
    let summary = run_prepared(&prepared, &a.seeds.0).map_err(classify)?;
    let files = emit_monte_carlo(&summary, &prepared.config.to_json(), &a.out).runtime()?;
    println!("runs: {}", summary.rows.len());
    println!(
        "converged: {}, detected: {}, missed and wrong: {}, false alarms: {}",
        summary.converged, summary.detected, summary.missed_and_wrong, summary.false_alarms
    );
    if let Some(t) = summary.mean_detection_time {
        println!("mean first detection: {t:.1}");
    }
    let [med, p90, max] = summary.error_quantiles;
    println!("final error quantiles: median {med:.3e}, p90 {p90:.3e}, max {max:.3e}");
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[derive(Subcommand)]
pub enum GraphCommand {
    /// Random geometric graph, retried until connected.
    Gen(GenArgs),
    /// Report connectivity, spectrum and sector coverage of a graph file.
    Check(CheckArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of nodes.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2000.0)]
    side: f64,
    #[arg(long, default_value_t = 600.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    retry_cap: usize,
    /// Directory for `edges.txt` and `positions.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Edge list, one `i j` pair per line.
    #[arg(long)]
    edges: PathBuf,
    /// Node positions CSV (`node,x,y`).
    #[arg(long)]
    positions: Option<PathBuf>,
    /// Region side length, needed for sector coverage.
    #[arg(long, default_value_t = 2000.0)]
    side: f64,
    /// Sector grid dimension; with positions, reports sector coverage and observability.
    #[arg(long, default_value_t = 3)]
    sectors: usize,
}

pub fn graph(cmd: GraphCommand) -> Result<(), Failure> {
    match cmd {
        GraphCommand::Gen(a) => {
            let (g, used) = connected_random_geometric_graph(a.n, a.side, a.radius, a.seed, a.retry_cap).config()?;
            std::fs::create_dir_all(&a.out).runtime()?;
            let (edges, positions) = (a.out.join("edges.txt"), a.out.join("positions.csv"));
            write_edge_list(&g, &edges).runtime()?;
            write_positions_csv(&g, &positions).runtime()?;
            println!(
                "nodes: {}, edges: {}, seed used: {used}",
                g.node_count(),
                g.edge_count()
            );
            println!("wrote {}", edges.display());
            println!("wrote {}", positions.display());
            Ok(())
        }
        GraphCommand::Check(a) => {
            let positions = a
                .positions
                .as_ref()
                .map(|p| read_positions_csv(p))
                .transpose()
                .config()?;
            let g = read_edge_list(&a.edges, positions.as_ref().map(Vec::len)).config()?;
            let connected = is_connected(&g);
            let l = laplacian(&g);
            println!("nodes: {}, edges: {}", g.node_count(), g.edge_count());
            println!("connected: {connected}");
            println!("algebraic connectivity: {:.6}", l.algebraic_connectivity());
            println!("largest Laplacian eigenvalue: {:.6}", l.max_eigenvalue());
            if let Some(pos) = positions {
                if a.sectors == 0 {
                    return Err(Failure::Config(anyhow!("sectors must be at least 1")));
                }
                let assignment = assign_sectors(&pos, a.side, a.sectors);
                let m = a.sectors * a.sectors;
                let mut counts = vec![0usize; m];
                for &s in &assignment {
                    counts[s] += 1;
                }
                let spec = sector_selector_spec(m, &assignment, 1.0).runtime()?;
                let all: Vec<usize> = (0..g.node_count()).collect();
                println!("nodes per sector: {counts:?}");
                println!("globally observable: {}", is_globally_observable(spec.h_list(), &all));
            }
            Ok(())
        }
    }
}
