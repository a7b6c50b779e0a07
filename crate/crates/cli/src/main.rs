//! `secinfer` command line: scenario runs, Monte-Carlo sweeps, graph tools,
//! centralized detection and the resilient consensus variants.

mod central;
mod consensus;
mod input;
mod scenario;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status 1: the inputs were wrong. Exit status 2: valid inputs, the
/// run itself failed.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

pub trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

#[derive(Parser)]
#[command(name = "secinfer", version, about = "Secure distributed inference simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write traces, summaries, plots and the resolved config.
    Simulate(scenario::SimulateArgs),
    /// Run a scenario once per seed and write a summary table.
    Mc(scenario::McArgs),
    /// Generate or inspect communication graphs.
    #[command(subcommand)]
    Graph(scenario::GraphCommand),
    /// Residual-based attack detection on a stacked measurement.
    Detect(central::DetectArgs),
    /// Sparse attack identification (exhaustive l0 or l1 relaxation).
    Identify(central::IdentifyArgs),
    /// Scalar consensus variants with optional misbehaving nodes.
    Consensus(consensus::ConsensusArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SECINFER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => scenario::simulate(a),
        Command::Mc(a) => scenario::mc(a),
        Command::Graph(g) => scenario::graph(g),
        Command::Detect(a) => central::detect(a),
        Command::Identify(a) => central::identify(a),
        Command::Consensus(a) => consensus::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
