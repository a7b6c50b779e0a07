//! Byzantine agent behavior: falsified broadcasts, falsified measurements,
//! and the strong/weak center-sector compromise scenarios.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::Measurement;
use crate::rng::{stream, StreamTag};
use crate::topology::{is_connected, is_globally_observable, Graph};

/// Margin below `γ_t` kept by stealthy broadcasts.
pub const DEFAULT_SAFETY: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("center sector {0} has no nodes")]
    EmptyCenter(usize),
    #[error("no compromise of half the center sector leaves a connected, globally observable network after {0} draws")]
    WeakRetryExhausted(usize),
    #[error("offset has length {got}, measurement has length {expected}")]
    OffsetLength { got: usize, expected: usize },
    #[error("compromised node {node} outside [0, {n})")]
    NodeOutOfRange { node: usize, n: usize },
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

fn default_direction() -> f64 {
    1.0
}

/// What compromised agents do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackStrategy {
    /// Broadcast a fixed vector every round.
    ConstantBroadcast { value: Vec<f64> },
    /// Broadcast i.i.d. uniform vectors on `[-scale, scale]^m`.
    RandomBroadcast { scale: f64 },
    /// Stay within `safety * γ_t` of every uncompromised neighbor while
    /// pushing one component of the neighborhood mean. With `pin` set the
    /// component moves toward that value only; otherwise it moves as far as
    /// allowed along `direction`.
    StealthyBias {
        component: usize,
        #[serde(default = "default_direction")]
        direction: f64,
        #[serde(default)]
        pin: Option<f64>,
        #[serde(default = "default_safety")]
        safety: f64,
    },
    /// Compromised sensors report `y + offset` but the agents otherwise
    /// follow the protocol.
    MeasurementOffset { offset: Vec<f64> },
}

impl AttackStrategy {
    /// Whether compromised agents replace their broadcasts.
    pub fn controls_broadcast(&self) -> bool {
        !matches!(self, AttackStrategy::MeasurementOffset { .. })
    }
}

/// Compromised node set and the strategy they follow. The set is fixed for
/// the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub compromised: BTreeSet<usize>,
    pub strategy: AttackStrategy,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            compromised: BTreeSet::new(),
            strategy: AttackStrategy::ConstantBroadcast { value: Vec::new() },
        }
    }

    pub fn validate(&self, node_count: usize) -> Result<(), AdversaryError> {
        match self.compromised.iter().find(|&&n| n >= node_count) {
            Some(&node) => Err(AdversaryError::NodeOutOfRange { node, n: node_count }),
            None => Ok(()),
        }
    }

    pub fn is_compromised(&self, node: usize) -> bool {
        self.compromised.contains(&node)
    }

    /// Nodes outside the compromised set, ascending.
    pub fn uncompromised(&self, node_count: usize) -> Vec<usize> {
        (0..node_count).filter(|n| !self.compromised.contains(n)).collect()
    }
}

/// The vector a compromised agent sends in round `t`.
///
/// `honest_neighbors` are the current states of the agent's uncompromised
/// neighbors (the only agents that check it), `gamma` the current
/// threshold and `m` the parameter dimension. Random draws come from the
/// `(seed, node, t)` stream.
pub fn byzantine_broadcast(
    strategy: &AttackStrategy,
    honest_neighbors: &[&DVector<f64>],
    gamma: f64,
    m: usize,
    node: usize,
    t: u64,
    seed: u64,
) -> DVector<f64> {
    match strategy {
        AttackStrategy::ConstantBroadcast { value } => DVector::from_column_slice(value),
        AttackStrategy::RandomBroadcast { scale } => {
            let mut rng = stream(seed, StreamTag::Broadcast, node as u64, t);
            DVector::from_iterator(m, (0..m).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)))
        }
        AttackStrategy::StealthyBias {
            component,
            direction,
            pin,
            safety,
        } => stealthy_bias(honest_neighbors, gamma * safety, *component, *direction, *pin, m)
            .unwrap_or_else(|| neighborhood_mean(honest_neighbors, m)),
        // protocol-following agents never reach here through the estimator;
        // report the neighborhood mean for completeness
        AttackStrategy::MeasurementOffset { .. } => neighborhood_mean(honest_neighbors, m),
    }
}

fn neighborhood_mean(states: &[&DVector<f64>], m: usize) -> DVector<f64> {
    if states.is_empty() {
        return DVector::zeros(m);
    }
    let mut acc = DVector::zeros(m);
    for s in states {
        acc += *s;
    }
    acc / states.len() as f64
}

/// Moves the neighborhood mean along coordinate `component` as far as the
/// balls of radius `radius` around every neighbor allow. Each ball cuts the
/// line in an interval; the broadcast lies in their intersection. `None`
/// when the intersection is empty.
pub fn stealthy_bias(
    states: &[&DVector<f64>],
    radius: f64,
    component: usize,
    direction: f64,
    pin: Option<f64>,
    m: usize,
) -> Option<DVector<f64>> {
    let mut center = neighborhood_mean(states, m);
    if states.is_empty() {
        if let Some(p) = pin {
            center[component] = p;
        }
        return Some(center);
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in states {
        let d = &center - *s;
        let along = d[component];
        let across = d.norm_squared() - along * along;
        let slack = radius * radius - across;
        if slack < 0.0 {
            return None;
        }
        let half = slack.sqrt();
        lo = lo.max(-along - half);
        hi = hi.min(-along + half);
    }
    if lo > hi {
        return None;
    }
    let shift = match pin {
        Some(p) => (p - center[component]).clamp(lo, hi),
        None if direction >= 0.0 => hi,
        None => lo,
    };
    center[component] += shift;
    Some(center)
}

/// Adds the attack offset to a measurement.
pub fn falsify_measurement(y: &Measurement, offset: &DVector<f64>) -> Result<Measurement, AdversaryError> {
    if offset.len() != y.value.len() {
        return Err(AdversaryError::OffsetLength {
            got: offset.len(),
            expected: y.value.len(),
        });
    }
    Ok(Measurement {
        node: y.node,
        time: y.time,
        value: &y.value + offset,
    })
}

fn sector_members(assignment: &[usize], sector: usize) -> Vec<usize> {
    (0..assignment.len()).filter(|&n| assignment[n] == sector).collect()
}

/// Every node of the center sector is compromised.
pub fn scenario_strong(
    assignment: &[usize],
    center: usize,
    strategy: AttackStrategy,
) -> Result<AttackSpec, AdversaryError> {
    let members = sector_members(assignment, center);
    if members.is_empty() {
        return Err(AdversaryError::EmptyCenter(center));
    }
    Ok(AttackSpec {
        compromised: members.into_iter().collect(),
        strategy,
    })
}

/// A uniformly random half (rounded down) of the center sector is
/// compromised. Draws are repeated until the uncompromised subnetwork is
/// connected and globally observable, at most `retry_cap` times.
pub fn scenario_weak(
    graph: &Graph,
    assignment: &[usize],
    center: usize,
    h_list: &[DMatrix<f64>],
    seed: u64,
    retry_cap: usize,
    strategy: AttackStrategy,
) -> Result<AttackSpec, AdversaryError> {
    let members = sector_members(assignment, center);
    if members.is_empty() {
        return Err(AdversaryError::EmptyCenter(center));
    }
    let take = members.len() / 2;
    for attempt in 0..retry_cap.max(1) {
        let mut rng = stream(seed, StreamTag::AttackSet, attempt as u64, 0);
        let compromised: BTreeSet<usize> = sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|i| members[i])
            .collect();
        let spec = AttackSpec {
            compromised,
            strategy: strategy.clone(),
        };
        let honest = spec.uncompromised(graph.node_count());
        let connected = graph
            .induced_subgraph(&honest)
            .map(|(g, _)| is_connected(&g))
            .unwrap_or(false);
        if connected && is_globally_observable(h_list, &honest) {
            return Ok(spec);
        }
    }
    Err(AdversaryError::WeakRetryExhausted(retry_cap))
}
