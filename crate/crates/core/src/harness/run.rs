use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, GraphSource, Scenario, ScenarioConfig, ThetaSource};
use crate::adversary::{
    byzantine_broadcast, scenario_strong, scenario_weak, AdversaryError, AttackSpec, AttackStrategy, DEFAULT_SAFETY,
};
use crate::estimator::{
    choose_gains, spectral_radius, DistributedEstimator, EstimatorError, EstimatorParams, Flag, InitialState,
};
use crate::measurement::{
    assign_sectors, center_sector, sample_parameter, sector_selector_spec, MeasurementError, MeasurementSpec, Parameter,
};
use crate::topology::{
    connected_random_geometric_graph, is_connected, is_globally_observable, laplacian, read_edge_list,
    read_positions_csv, Graph, TopologyError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

impl RunError {
    /// Whether the failure traces back to the configuration rather than to
    /// the run itself.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, RunError::Estimator(EstimatorError::Dimension(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Detected,
    MissedAndWrong,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::Detected => "detected",
            Outcome::MissedAndWrong => "missed_and_wrong",
        }
    }
}

/// One trace row: relative error `‖x_n - θ‖ / ‖θ‖` and flag of an
/// uncompromised node after `t` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub node: usize,
    pub error: f64,
    pub flag: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: usize,
    pub sector: usize,
    pub detection_time: Option<u64>,
    pub final_error: f64,
    /// `|x_n[c] - θ_c| / |θ_c|` for the center component `c`.
    pub center_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub outcome: Outcome,
    /// Detection without any compromised node.
    pub false_alarm: bool,
    pub first_detection: Option<u64>,
    pub detected_nodes: usize,
    pub max_final_error: f64,
    pub min_center_error: f64,
    pub max_center_error: f64,
    pub mean_snr_db: f64,
    pub network_snr_db: f64,
    pub spectral_radius: f64,
    pub final_gamma: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    /// Resolved config: replaying it reproduces this result.
    pub config: ScenarioConfig,
    pub theta: Vec<f64>,
    pub compromised: Vec<usize>,
    pub trace: Vec<TraceRow>,
    /// Uncompromised nodes only.
    pub nodes: Vec<NodeSummary>,
    pub summary: RunSummary,
    pub warnings: Vec<String>,
    pub final_states: Vec<Vec<f64>>,
}

/// Everything about a scenario that does not depend on the run seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub graph: Graph,
    pub assignment: Vec<usize>,
    pub spec: MeasurementSpec,
    pub alpha: f64,
    pub beta: f64,
    pub r1: f64,
    pub spectral_radius: f64,
    pub warnings: Vec<String>,
}

/// Builds the network, materializes `"auto"` gains and records the used
/// graph seed in the returned config.
pub fn prepare(config: &ScenarioConfig) -> Result<Prepared, RunError> {
    config.validate()?;
    config.check_files()?;
    let mut resolved = config.clone();
    let mut warnings = Vec::new();

    let (graph, side) = match &mut resolved.graph {
        GraphSource::Geometric {
            n,
            side,
            radius,
            seed,
            retry_cap,
        } => {
            let (g, used) = connected_random_geometric_graph(*n, *side, *radius, *seed, *retry_cap)?;
            if used != *seed {
                log::info!("graph seed {} disconnected; using {used}", *seed);
            }
            *seed = used;
            (g, *side)
        }
        GraphSource::File { edges, positions, side } => {
            let pos = read_positions_csv(positions)?;
            let g = read_edge_list(edges, Some(pos.len()))?.with_positions(pos)?;
            if !is_connected(&g) {
                warnings.push("graph is disconnected".to_string());
            }
            (g, *side)
        }
    };
    let positions = graph.positions().expect("both graph sources carry positions");
    let assignment = assign_sectors(positions, side, config.sectors);
    let m = config.dim();
    let spec = sector_selector_spec(m, &assignment, config.noise_variance)?;
    let lap = laplacian(&graph);

    let est = &mut resolved.estimator;
    let (alpha, beta, rho) = match (est.alpha.value(), est.beta.value()) {
        (Some(a), Some(b)) => (a, b, spectral_radius(&lap, spec.h_list(), a, b)),
        (None, None) => {
            let g = choose_gains(&lap, spec.h_list(), m)?;
            (g.alpha, g.beta, g.spectral_radius)
        }
        _ => return Err(ConfigError::Invalid("alpha and beta must both be \"auto\" or both be numbers".into()).into()),
    };
    if rho >= 1.0 {
        warnings.push(format!(
            "spectral radius {rho:.6} >= 1 with alpha={alpha}, beta={beta}; estimates may not converge"
        ));
    }
    let r1 = match est.r1.value() {
        Some(r) => r,
        None if rho < 1.0 => (1.0 - rho) / 2.0,
        None => return Err(ConfigError::Invalid(format!("r1 = \"auto\" needs spectral radius < 1, got {rho}")).into()),
    };
    est.alpha = super::config::Gain::Value(alpha);
    est.beta = super::config::Gain::Value(beta);
    est.r1 = super::config::Gain::Value(r1);
    resolved.trial_seeds.clear();

    Ok(Prepared {
        config: resolved,
        graph,
        assignment,
        spec,
        alpha,
        beta,
        r1,
        spectral_radius: rho,
        warnings,
    })
}

pub fn relative_error(x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let scale = theta.norm();
    let d = (x - theta).norm();
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

fn component_error(x: f64, truth: f64) -> f64 {
    if truth != 0.0 {
        (x - truth).abs() / truth.abs()
    } else {
        (x - truth).abs()
    }
}

/// Outcome rule: any uncompromised flag means Detected; otherwise the run
/// Converged if every uncompromised relative error at the horizon is below
/// `threshold`, and is MissedAndWrong if not.
pub fn classify(detected: bool, max_final_error: f64, threshold: f64) -> Outcome {
    if detected {
        Outcome::Detected
    } else if max_final_error < threshold {
        Outcome::Converged
    } else {
        Outcome::MissedAndWrong
    }
}

impl Prepared {
    fn parameter(&self, seed: u64) -> Result<Parameter, RunError> {
        let m = self.config.dim();
        let p = match &self.config.theta {
            ThetaSource::Uniform { low, high } => {
                let p = sample_parameter(m, *low, *high, seed)?;
                match self.config.estimator.eta {
                    Some(eta) => Parameter::new(p.theta().clone(), eta)?,
                    None => p,
                }
            }
            ThetaSource::Fixed { values } => {
                let theta = DVector::from_column_slice(values);
                let eta = self.config.estimator.eta.unwrap_or_else(|| theta.norm());
                Parameter::new(theta, eta)?
            }
        };
        Ok(p)
    }

    fn attack(&self, theta: &Parameter, seed: u64) -> Result<AttackSpec, RunError> {
        let a = &self.config.attack;
        let center = center_sector(self.config.sectors);
        let strategy = a.strategy.clone().unwrap_or(AttackStrategy::StealthyBias {
            component: center,
            direction: 1.0,
            pin: Some(a.pin_factor * theta.theta()[center]),
            safety: DEFAULT_SAFETY,
        });
        let spec = match a.scenario {
            Scenario::None => AttackSpec::none(),
            Scenario::Strong => scenario_strong(&self.assignment, center, strategy)?,
            Scenario::Weak => scenario_weak(
                &self.graph,
                &self.assignment,
                center,
                self.spec.h_list(),
                seed,
                a.retry_cap,
                strategy,
            )?,
            Scenario::Custom => AttackSpec {
                compromised: a.compromised.iter().copied().collect(),
                strategy,
            },
        };
        spec.validate(self.graph.node_count())?;
        Ok(spec)
    }

    /// Runs the scenario with `seed` as the run seed. Without `keep_trace`
    /// only the summaries are produced.
    pub fn run(&self, seed: u64, keep_trace: bool) -> Result<ScenarioResult, RunError> {
        let mut config = self.config.clone();
        config.seed = seed;
        let n = self.graph.node_count();
        let m = config.dim();
        let theta = self.parameter(seed)?;
        let attack = self.attack(&theta, seed)?;
        let honest = attack.uncompromised(n);
        let mut warnings = self.warnings.clone();
        if !attack.compromised.is_empty() && !is_globally_observable(self.spec.h_list(), &honest) {
            warnings.push("uncompromised nodes are not globally observable".to_string());
        }

        let params = EstimatorParams {
            alpha: self.alpha,
            beta: self.beta,
            big_k: config.estimator.big_k,
            tau: config.estimator.tau,
            r1: self.r1,
            eta: theta.eta(),
        };
        let byzantine: Vec<bool> = (0..n)
            .map(|i| attack.is_compromised(i) && attack.strategy.controls_broadcast())
            .collect();
        let offset = match &attack.strategy {
            AttackStrategy::MeasurementOffset { offset } => Some(DVector::from_column_slice(offset)),
            _ => None,
        };
        let initial = match config.initial_state {
            InitialState::Zero => DVector::zeros(m),
            InitialState::Truth => theta.theta().clone(),
        };
        let mut est = DistributedEstimator::new(
            &self.graph,
            self.spec.h_list().to_vec(),
            params,
            byzantine.clone(),
            &initial,
        )?;

        let horizon = config.horizon;
        let stride = config.trace_stride;
        let mut trace = Vec::new();
        let mut detection: Vec<Option<u64>> = vec![None; n];
        let record = |est: &DistributedEstimator, t: u64, trace: &mut Vec<TraceRow>| {
            for &node in &honest {
                let a = &est.agents()[node];
                trace.push(TraceRow {
                    t,
                    node,
                    error: relative_error(&a.x, theta.theta()),
                    flag: a.flag.as_u8(),
                });
            }
        };
        if keep_trace {
            record(&est, 0, &mut trace);
        }
        let silent = DVector::zeros(1);
        let mut ys: Vec<DVector<f64>> = vec![silent.clone(); n];
        for t in 0..horizon {
            for (node, y) in ys.iter_mut().enumerate() {
                if byzantine[node] {
                    continue;
                }
                let mut value = self.spec.measure(&theta, node, t, seed).value;
                if let (Some(off), true) = (&offset, attack.is_compromised(node)) {
                    if off.len() != value.len() {
                        return Err(AdversaryError::OffsetLength {
                            got: off.len(),
                            expected: value.len(),
                        }
                        .into());
                    }
                    value += off;
                }
                *y = value;
            }
            est.round(&ys, |node, nb, gamma| {
                byzantine_broadcast(&attack.strategy, nb, gamma, m, node, t, seed)
            })?;
            let now = t + 1;
            for &node in &honest {
                if detection[node].is_none() && est.agents()[node].flag == Flag::Attack {
                    detection[node] = Some(now);
                }
            }
            if keep_trace && (now % stride == 0 || now == horizon) {
                record(&est, now, &mut trace);
            }
        }

        let center = center_sector(config.sectors);
        let nodes: Vec<NodeSummary> = honest
            .iter()
            .map(|&node| {
                let x = &est.agents()[node].x;
                NodeSummary {
                    node,
                    sector: self.assignment[node],
                    detection_time: detection[node],
                    final_error: relative_error(x, theta.theta()),
                    center_error: component_error(x[center], theta.theta()[center]),
                }
            })
            .collect();
        let detected: Vec<u64> = nodes.iter().filter_map(|s| s.detection_time).collect();
        let max_final_error = nodes.iter().map(|s| s.final_error).fold(0.0, f64::max);
        let summary = RunSummary {
            seed,
            outcome: classify(!detected.is_empty(), max_final_error, config.convergence_threshold),
            false_alarm: attack.compromised.is_empty() && !detected.is_empty(),
            first_detection: detected.iter().copied().min(),
            detected_nodes: detected.len(),
            max_final_error,
            min_center_error: nodes.iter().map(|s| s.center_error).fold(f64::INFINITY, f64::min),
            max_center_error: nodes.iter().map(|s| s.center_error).fold(0.0, f64::max),
            mean_snr_db: self.spec.mean_snr_db(&theta),
            network_snr_db: self.spec.network_snr_db(&theta),
            spectral_radius: self.spectral_radius,
            final_gamma: est.gamma(),
        };
        Ok(ScenarioResult {
            config,
            theta: theta.theta().iter().copied().collect(),
            compromised: attack.compromised.iter().copied().collect(),
            trace,
            nodes,
            summary,
            warnings,
            final_states: est.agents().iter().map(|a| a.x.iter().copied().collect()).collect(),
        })
    }
}

/// Prepares and runs `config` with its own seed, keeping the trace.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, RunError> {
    prepare(config)?.run(config.seed, true)
}

/// Per-node detection times and horizon errors recomputed from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub outcome: Outcome,
    pub detection_times: Vec<(usize, Option<u64>)>,
    pub final_errors: Vec<(usize, f64)>,
    pub max_final_error: f64,
}

/// Recomputes the outcome from trace rows alone. Detection times are exact
/// when the trace was written with stride 1.
pub fn summarize_trace(trace: &[TraceRow], threshold: f64) -> TraceSummary {
    use std::collections::BTreeMap;
    let horizon = trace.iter().map(|r| r.t).max().unwrap_or(0);
    let mut detection: BTreeMap<usize, Option<u64>> = BTreeMap::new();
    let mut finals = Vec::new();
    for r in trace {
        let d = detection.entry(r.node).or_insert(None);
        if r.flag != 0 {
            *d = Some(d.map_or(r.t, |prev| prev.min(r.t)));
        }
        if r.t == horizon {
            finals.push((r.node, r.error));
        }
    }
    finals.sort_by_key(|&(n, _)| n);
    let max_final_error = finals.iter().map(|&(_, e)| e).fold(0.0, f64::max);
    let detected = detection.values().any(Option::is_some);
    TraceSummary {
        outcome: classify(detected, max_final_error, threshold),
        detection_times: detection.into_iter().collect(),
        final_errors: finals,
        max_final_error,
    }
}
