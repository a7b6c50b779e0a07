use serde::Serialize;

use super::config::ScenarioConfig;
use super::run::{prepare, Outcome, Prepared, RunError, RunSummary};

/// Aggregate over independent runs, one per seed, in seed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub rows: Vec<RunSummary>,
    pub converged: usize,
    pub detected: usize,
    pub missed_and_wrong: usize,
    pub false_alarms: usize,
    /// Mean of the first detection times over runs that detected.
    pub mean_detection_time: Option<f64>,
    /// Median, 90th percentile and maximum of `max_final_error`.
    pub error_quantiles: [f64; 3],
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl MonteCarloSummary {
    pub fn from_rows(rows: Vec<RunSummary>) -> Self {
        let count = |o: Outcome| rows.iter().filter(|r| r.outcome == o).count();
        let detections: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.first_detection)
            .map(|t| t as f64)
            .collect();
        let mut errors: Vec<f64> = rows.iter().map(|r| r.max_final_error).collect();
        errors.sort_by(f64::total_cmp);
        Self {
            converged: count(Outcome::Converged),
            detected: count(Outcome::Detected),
            missed_and_wrong: count(Outcome::MissedAndWrong),
            false_alarms: rows.iter().filter(|r| r.false_alarm).count(),
            mean_detection_time: (!detections.is_empty())
                .then(|| detections.iter().sum::<f64>() / detections.len() as f64),
            error_quantiles: [quantile(&errors, 0.5), quantile(&errors, 0.9), quantile(&errors, 1.0)],
            rows,
        }
    }
}

/// Runs `config` once per seed. Trials share the graph and gains and run in
/// parallel when the `parallel` feature is on; the result does not depend
/// on scheduling.
pub fn run_monte_carlo(config: &ScenarioConfig, seeds: &[u64]) -> Result<MonteCarloSummary, RunError> {
    run_prepared(&prepare(config)?, seeds)
}

/// [`run_monte_carlo`] on an already prepared scenario.
pub fn run_prepared(prepared: &Prepared, seeds: &[u64]) -> Result<MonteCarloSummary, RunError> {
    let run = |&seed: &u64| prepared.run(seed, false).map(|r| r.summary);
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<RunSummary>, RunError> = {
        use rayon::prelude::*;
        seeds.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<RunSummary>, RunError> = seeds.iter().map(run).collect();
    Ok(MonteCarloSummary::from_rows(rows?))
}

#[cfg(test)]
mod tests {
    use super::super::config::Scenario;
    use super::super::run::run_scenario;
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk(Scenario::Weak);
        c.horizon = 200;
        c
    }

    #[test]
    fn single_seed_equals_the_run() {
        let mut c = small();
        c.seed = 4;
        let mc = run_monte_carlo(&c, &[4]).unwrap();
        assert_eq!(mc.rows, vec![run_scenario(&c).unwrap().summary]);
    }

    #[test]
    fn duplicated_seeds_give_identical_rows() {
        let mc = run_monte_carlo(&small(), &[3, 9, 3]).unwrap();
        assert_eq!(mc.rows[0], mc.rows[2]);
        assert_eq!(mc.converged + mc.detected + mc.missed_and_wrong, 3);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
