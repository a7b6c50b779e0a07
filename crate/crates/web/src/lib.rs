//! Browser demo. Each operation is a plain function returning JSON so it
//! can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use secinfer::estimator::{EstimatorParams, ThresholdState};
use secinfer::harness::{prepare, GraphSource, Scenario, ScenarioConfig};
use secinfer::measurement::{assign_sectors, center_sector, sector_selector_spec};
use secinfer::topology::{connected_random_geometric_graph, is_globally_observable};

/// Longest run the page may request.
pub const MAX_HORIZON: u64 = 20_000;
/// Samples kept per node in scenario traces.
pub const TRACE_POINTS: u64 = 200;

#[derive(Debug, Serialize)]
pub struct NodeView {
    pub x: f64,
    pub y: f64,
    pub sector: usize,
    pub compromised: bool,
}

#[derive(Debug, Serialize)]
pub struct NetworkView {
    pub side: f64,
    pub seed_used: u64,
    pub center_sector: usize,
    pub observable: bool,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<(usize, usize)>,
}

/// Random geometric network with sector labels, retried until connected.
pub fn generate_network(n: usize, side: f64, radius: f64, seed: u64, sectors: usize) -> Result<String, String> {
    if sectors == 0 {
        return Err("sectors must be at least 1".into());
    }
    let (g, seed_used) = connected_random_geometric_graph(n, side, radius, seed, 100).map_err(|e| e.to_string())?;
    let pos = g.positions().expect("geometric graphs carry positions").to_vec();
    let assignment = assign_sectors(&pos, side, sectors);
    let spec = sector_selector_spec(sectors * sectors, &assignment, 1.0).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..n).collect();
    let view = NetworkView {
        side,
        seed_used,
        center_sector: center_sector(sectors),
        observable: is_globally_observable(spec.h_list(), &all),
        nodes: pos
            .iter()
            .zip(&assignment)
            .map(|(&[x, y], &sector)| NodeView {
                x,
                y,
                sector,
                compromised: false,
            })
            .collect(),
        edges: g.edges().to_vec(),
    };
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

#[derive(Debug, Serialize)]
pub struct ScenarioView {
    pub network: NetworkView,
    pub outcome: &'static str,
    pub max_final_error: f64,
    pub min_center_error: f64,
    pub first_detection: Option<u64>,
    pub detected_nodes: usize,
    pub mean_snr_db: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r1: f64,
    pub times: Vec<u64>,
    /// Per uncompromised node: relative error at each of `times`.
    pub errors: Vec<Vec<f64>>,
    /// Per uncompromised node: first sampled time with an attack flag.
    pub flag_times: Vec<Option<u64>>,
    pub series_nodes: Vec<usize>,
}

fn parse_scenario(name: &str) -> Result<Scenario, String> {
    match name {
        "none" => Ok(Scenario::None),
        "strong" => Ok(Scenario::Strong),
        "weak" => Ok(Scenario::Weak),
        _ => Err(format!("unknown scenario {name:?}; expected none, strong or weak")),
    }
}

/// Desk-scale scenario run with the trace thinned to about
/// [`TRACE_POINTS`] samples per node.
pub fn run_demo_scenario(scenario: &str, seed: u64, horizon: u64) -> Result<String, String> {
    if !(1..=MAX_HORIZON).contains(&horizon) {
        return Err(format!("horizon must be in 1..={MAX_HORIZON}"));
    }
    let mut config = ScenarioConfig::desk(parse_scenario(scenario)?);
    config.seed = seed;
    config.horizon = horizon;
    config.trace_stride = (horizon / TRACE_POINTS).max(1);
    let prepared = prepare(&config).map_err(|e| e.to_string())?;
    let result = prepared.run(seed, true).map_err(|e| e.to_string())?;

    let pos = prepared.graph.positions().expect("geometric graphs carry positions");
    let network = NetworkView {
        side: match &prepared.config.graph {
            GraphSource::Geometric { side, .. } | GraphSource::File { side, .. } => *side,
        },
        seed_used: match &prepared.config.graph {
            GraphSource::Geometric { seed, .. } => *seed,
            GraphSource::File { .. } => 0,
        },
        center_sector: center_sector(prepared.config.sectors),
        // prepare() rejects unobservable networks during the gain search.
        observable: true,
        nodes: pos
            .iter()
            .zip(&prepared.assignment)
            .enumerate()
            .map(|(i, (&[x, y], &sector))| NodeView {
                x,
                y,
                sector,
                compromised: result.compromised.contains(&i),
            })
            .collect(),
        edges: prepared.graph.edges().to_vec(),
    };

    let series_nodes: Vec<usize> = result.nodes.iter().map(|n| n.node).collect();
    let slot = |node: usize| series_nodes.iter().position(|&n| n == node);
    let mut times: Vec<u64> = Vec::new();
    let mut errors = vec![Vec::new(); series_nodes.len()];
    let mut flag_times = vec![None; series_nodes.len()];
    for row in &result.trace {
        let Some(k) = slot(row.node) else { continue };
        if times.last() != Some(&row.t) {
            times.push(row.t);
        }
        errors[k].push(row.error);
        if row.flag != 0 && flag_times[k].is_none() {
            flag_times[k] = Some(row.t);
        }
    }
    let s = &result.summary;
    let view = ScenarioView {
        network,
        outcome: s.outcome.as_str(),
        max_final_error: s.max_final_error,
        min_center_error: s.min_center_error,
        first_detection: s.first_detection,
        detected_nodes: s.detected_nodes,
        mean_snr_db: s.mean_snr_db,
        alpha: prepared.alpha,
        beta: prepared.beta,
        r1: prepared.r1,
        times,
        errors,
        flag_times,
        series_nodes,
    };
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

#[derive(Debug, Serialize)]
pub struct ThresholdView {
    pub t: Vec<u64>,
    pub gamma: Vec<f64>,
}

/// Detection threshold `γ_t` for `t = 0..=steps`, sampled at `points`
/// evenly spaced iterations.
#[allow(clippy::too_many_arguments)]
pub fn threshold_curve(
    alpha: f64,
    big_k: f64,
    tau: f64,
    r1: f64,
    eta: f64,
    n: usize,
    steps: u64,
    points: u64,
) -> Result<String, String> {
    let params = EstimatorParams {
        alpha,
        beta: 0.1,
        big_k,
        tau,
        r1,
        eta,
    };
    params.validate().map_err(|e| e.to_string())?;
    if n == 0 || points == 0 {
        return Err("n and points must be positive".into());
    }
    let every = (steps / points).max(1);
    let mut s = ThresholdState::initial(eta, n);
    let mut view = ThresholdView {
        t: Vec::new(),
        gamma: Vec::new(),
    };
    for t in 0..=steps {
        if t % every == 0 || t == steps {
            view.t.push(t);
            view.gamma.push(s.gamma);
        }
        s = s.step(&params);
    }
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = generateNetwork)]
pub fn generate_network_js(n: usize, side: f64, radius: f64, seed: u64, sectors: usize) -> Result<String, JsValue> {
    js(generate_network(n, side, radius, seed, sectors))
}

#[wasm_bindgen(js_name = runScenario)]
pub fn run_demo_scenario_js(scenario: &str, seed: u64, horizon: u64) -> Result<String, JsValue> {
    js(run_demo_scenario(scenario, seed, horizon))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = thresholdCurve)]
pub fn threshold_curve_js(
    alpha: f64,
    big_k: f64,
    tau: f64,
    r1: f64,
    eta: f64,
    n: usize,
    steps: u64,
    points: u64,
) -> Result<String, JsValue> {
    js(threshold_curve(alpha, big_k, tau, r1, eta, n, steps, points))
}
