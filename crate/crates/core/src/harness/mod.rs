//! Scenario configuration, the simulation loop, Monte-Carlo aggregation
//! and file outputs.

pub mod config;
pub mod mc;
pub mod output;
#[cfg(feature = "plots")]
pub mod plot;
pub mod run;

pub use config::{AttackConfig, Gain, GraphSource, Scenario, ScenarioConfig, ThetaSource};
pub use mc::{run_monte_carlo, run_prepared, MonteCarloSummary};
pub use output::{emit_monte_carlo, emit_outputs, read_trace_csv, trace_csv_string, write_trace_csv};
pub use run::{prepare, run_scenario, summarize_trace, Outcome, RunError, RunSummary, ScenarioResult, TraceRow};
