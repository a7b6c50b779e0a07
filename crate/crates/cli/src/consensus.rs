use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use log::warn;
use rand::Rng;

use secinfer::consensus::{
    run_adaptive, run_average_consensus, run_leblanc, run_wmsr, AdaptiveGains, ConsensusSample, ConsensusWeights,
    NodeKind,
};
use secinfer::rng::{stream, StreamTag};
use secinfer::topology::{connected_random_geometric_graph, read_edge_list, Graph};

use crate::input::sink;
use crate::{Classify, Failure};

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Algo {
    /// Metropolis-weighted averaging.
    Avg,
    /// Trimmed averaging that drops the F most extreme neighbor values each side.
    Wmsr,
    /// Resilient estimation from relative measurements anchored at reliable nodes.
    Leblanc,
    /// Noisy estimation with disagreement-attenuated neighbor weights and gain.
    Adaptive,
}

#[derive(Args)]
pub struct ConsensusArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Edge list; a random geometric graph is generated when omitted.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    /// Seeds the graph, initial values, truths and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    steps: u64,
    /// Trimming parameter for wmsr and leblanc.
    #[arg(long, default_value_t = 1)]
    f: usize,
    /// Comma-separated misbehaving nodes.
    #[arg(long, value_delimiter = ',')]
    byzantine: Vec<usize>,
    /// Constant value the misbehaving nodes broadcast.
    #[arg(long, default_value_t = 1000.0)]
    attack_value: f64,
    /// Comma-separated reliable (anchor) nodes for leblanc. Trimming needs
    /// about 2F+1 independent paths to the anchors, so one anchor often stalls.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    reliable: Vec<usize>,
    /// Parameter estimated by adaptive.
    #[arg(long, default_value_t = 40.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Trace CSV (`t,node,value,error`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_graph(a: &ConsensusArgs) -> Result<Graph, Failure> {
    match &a.edges {
        Some(p) => read_edge_list(p, None).config(),
        None => connected_random_geometric_graph(a.n, a.side, a.radius, a.seed, 100)
            .map(|(g, _)| g)
            .config(),
    }
}

pub fn run(a: ConsensusArgs) -> Result<(), Failure> {
    let g = load_graph(&a)?;
    let n = g.node_count();
    if let Some(&bad) = a.byzantine.iter().chain(&a.reliable).find(|&&i| i >= n) {
        return Err(Failure::Config(anyhow!("node {bad} out of range for {n} nodes")));
    }
    let byz = |i: usize| a.byzantine.contains(&i);
    let attack = |i: usize, _t: u64| byz(i).then_some(a.attack_value);
    let mut rng = stream(a.seed, StreamTag::Experiment, 1, 0);
    let trace: Vec<ConsensusSample> = match a.algo {
        Algo::Avg => {
            if !a.byzantine.is_empty() {
                warn!("avg has no misbehaving-node model; --byzantine ignored");
            }
            let init: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            run_average_consensus(&ConsensusWeights::metropolis(&g), &init, a.steps).runtime()?
        }
        Algo::Wmsr => {
            let init: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            run_wmsr(&g, &init, a.f, a.steps, attack)
        }
        Algo::Leblanc => {
            let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
            let kinds: Vec<NodeKind> = (0..n)
                .map(|i| {
                    if byz(i) {
                        NodeKind::Malicious
                    } else if a.reliable.contains(&i) {
                        NodeKind::Reliable { value: truth[i] }
                    } else {
                        NodeKind::Normal
                    }
                })
                .collect();
            run_leblanc(&g, &truth, &kinds, a.f, a.steps, |_, _| a.attack_value)
        }
        Algo::Adaptive => {
            let gains = AdaptiveGains {
                alpha: 0.2,
                beta: 0.1,
                c_consensus: 5.0 * a.noise_std.max(1e-3),
                c_innovation: 50.0 * a.noise_std.max(1e-3),
            };
            run_adaptive(&g, a.theta, a.noise_std, &gains, a.steps, a.seed, attack)
        }
    };
    let mut w = sink(a.out.as_ref()).runtime()?;
    w.write_record(["t", "node", "value", "error"]).runtime()?;
    for s in &trace {
        w.write_record([
            s.t.to_string(),
            s.node.to_string(),
            s.value.to_string(),
            s.error.to_string(),
        ])
        .runtime()?;
    }
    w.flush().runtime()?;
    let last: Vec<&ConsensusSample> = trace.iter().filter(|s| s.t == a.steps).collect();
    let max_err = last.iter().map(|s| s.error).fold(0.0, f64::max);
    let lo = last.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let hi = last.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    let line = format!(
        "nodes {n}, steps {}: final spread {:.3e}, max error {max_err:.3e}",
        a.steps,
        hi - lo
    );
    if a.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}
