use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AttackStrategy;
use crate::estimator::InitialState;

pub const SCHEMA_VERSION: u32 = 1;

/// Graph seed of the desk-scale preset: connected, every sector occupied,
/// and half the center sector removable without losing observability.
pub const DESK_GRAPH_SEED: u64 = 7;
/// Same for the 500-node preset.
pub const FULL_GRAPH_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Either a fixed number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Value(f64),
    Keyword(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

impl Gain {
    pub const AUTO: Gain = Gain::Keyword(Auto::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Gain::Value(v) => Some(v),
            Gain::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// Uniform positions on `[0, side]^2`, edges within `radius`. Seeds are
    /// retried upward until the graph is connected; the resolved config
    /// records the seed that was used.
    Geometric {
        n: usize,
        side: f64,
        radius: f64,
        seed: u64,
        #[serde(default = "default_retry_cap")]
        retry_cap: usize,
    },
    /// Edge list plus a `node,x,y` positions CSV (positions decide sectors).
    File {
        edges: PathBuf,
        positions: PathBuf,
        side: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSource {
    /// Components i.i.d. uniform, drawn from the run seed.
    Uniform {
        low: f64,
        high: f64,
    },
    Fixed {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub alpha: Gain,
    pub beta: Gain,
    pub r1: Gain,
    pub big_k: f64,
    pub tau: f64,
    /// Defaults to the bound implied by the parameter source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    None,
    /// Whole center sector compromised.
    Strong,
    /// Random half of the center sector, redrawn until the rest of the
    /// network stays connected and observable.
    Weak,
    /// Explicit node list.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compromised: Vec<usize>,
    /// Without an explicit strategy, compromised agents run StealthyBias on
    /// the center component pinned at `pin_factor` times its true value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<AttackStrategy>,
    #[serde(default = "default_pin_factor")]
    pub pin_factor: f64,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
}

impl AttackConfig {
    pub fn none() -> Self {
        Self::scenario(Scenario::None)
    }

    pub fn scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            compromised: Vec::new(),
            strategy: None,
            pin_factor: default_pin_factor(),
            retry_cap: default_retry_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub graph: GraphSource,
    /// Sectors form a `sectors x sectors` grid; one parameter component each.
    pub sectors: usize,
    pub theta: ThetaSource,
    pub noise_variance: f64,
    pub estimator: EstimatorConfig,
    pub attack: AttackConfig,
    #[serde(default)]
    pub initial_state: InitialState,
    pub horizon: u64,
    /// Drives the parameter draw, noise, weak-attack selection and random
    /// broadcasts.
    pub seed: u64,
    /// Seeds for `mc`; `seed` is replaced by each in turn.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trial_seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
    /// Keep every `trace_stride`-th iteration in the trace (the horizon is
    /// always kept).
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
}

fn default_retry_cap() -> usize {
    100
}

fn default_pin_factor() -> f64 {
    1.5
}

fn default_threshold() -> f64 {
    0.05
}

fn default_stride() -> u64 {
    1
}

impl ScenarioConfig {
    /// 50 nodes on a 2 km square with 600 m radius, 9 sectors, θ ~ U[0,160],
    /// noise variance 10, 20,000 iterations.
    pub fn desk(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            graph: GraphSource::Geometric {
                n: 50,
                side: 2000.0,
                radius: 600.0,
                seed: DESK_GRAPH_SEED,
                retry_cap: default_retry_cap(),
            },
            sectors: 3,
            theta: ThetaSource::Uniform { low: 0.0, high: 160.0 },
            noise_variance: 10.0,
            estimator: EstimatorConfig {
                alpha: Gain::AUTO,
                beta: Gain::AUTO,
                r1: Gain::AUTO,
                big_k: 0.01,
                tau: 0.25,
                eta: None,
            },
            attack: AttackConfig::scenario(scenario),
            initial_state: InitialState::Zero,
            horizon: 20_000,
            seed: 0,
            trial_seeds: Vec::new(),
            convergence_threshold: default_threshold(),
            trace_stride: 1,
        }
    }

    /// The 500-node, 200 m radius network; long-running.
    pub fn full(scenario: Scenario) -> Self {
        let mut c = Self::desk(scenario);
        c.graph = GraphSource::Geometric {
            n: 500,
            side: 2000.0,
            radius: 200.0,
            seed: FULL_GRAPH_SEED,
            retry_cap: default_retry_cap(),
        };
        c.trace_stride = 10;
        c
    }

    pub fn preset(name: &str) -> Option<Self> {
        let (scale, scenario) = name.split_once('-')?;
        let scenario = match scenario {
            "none" => Scenario::None,
            "strong" => Scenario::Strong,
            "weak" => Scenario::Weak,
            _ => return None,
        };
        match scale {
            "desk" => Some(Self::desk(scenario)),
            "full" => Some(Self::full(scenario)),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.sectors * self.sectors
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|source| ConfigError::Json {
            path: origin.to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_json(&text, &path.display().to_string())?;
        // relative graph files resolve against the config's directory
        if let GraphSource::File { edges, positions, .. } = &mut config.graph {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [edges, positions] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        config.check_files()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.sectors == 0 {
            return bad("sectors must be at least 1".into());
        }
        if self.trace_stride == 0 {
            return bad("trace_stride must be at least 1".into());
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!(
                "noise_variance must be finite and nonnegative, got {}",
                self.noise_variance
            ));
        }
        if !(self.convergence_threshold > 0.0) {
            return bad("convergence_threshold must be positive".into());
        }
        match &self.graph {
            GraphSource::Geometric { n, side, radius, .. } => {
                if *n == 0 || !(*side > 0.0) || !(*radius > 0.0) {
                    return bad("geometric graph needs positive n, side and radius".into());
                }
            }
            GraphSource::File { side, .. } => {
                if !(*side > 0.0) {
                    return bad("side must be positive".into());
                }
            }
        }
        match &self.theta {
            ThetaSource::Uniform { low, high } if !(low <= high && low.is_finite() && high.is_finite()) => {
                return bad(format!("theta range [{low}, {high}] is empty"));
            }
            ThetaSource::Fixed { values } if values.len() != self.dim() => {
                return bad(format!(
                    "theta has {} components, sectors need {}",
                    values.len(),
                    self.dim()
                ));
            }
            _ => {}
        }
        for (name, g) in [
            ("alpha", self.estimator.alpha),
            ("beta", self.estimator.beta),
            ("r1", self.estimator.r1),
        ] {
            if let Some(v) = g.value() {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.attack.scenario == Scenario::Custom && self.attack.compromised.is_empty() {
            return bad("custom attack needs a compromised node list".into());
        }
        if self.attack.scenario != Scenario::Custom && !self.attack.compromised.is_empty() {
            return bad("compromised nodes are only accepted with scenario \"custom\"".into());
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<(), ConfigError> {
        if let GraphSource::File { edges, positions, .. } = &self.graph {
            for p in [edges, positions] {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!(
                        "graph file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
