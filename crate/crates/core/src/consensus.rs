//! Scalar consensus algorithms: weighted averaging, W-MSR trimming, the
//! relative-measurement resilient estimator, and adaptive neighbor/gain
//! weighting. Vector states run these componentwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{stream, StreamTag};
use crate::topology::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("weight matrix is {rows}x{cols}, expected {n}x{n}")]
    Shape { rows: usize, cols: usize, n: usize },
    #[error("row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("negative weight at ({0}, {1})")]
    Negative(usize, usize),
    #[error("weight at ({0}, {1}) is off the graph")]
    OffGraph(usize, usize),
    #[error("{states} states for {n} nodes")]
    StateCount { states: usize, n: usize },
}

/// Row-stochastic weights supported on edges and the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights(DMatrix<f64>);

impl ConsensusWeights {
    pub fn new(w: DMatrix<f64>, graph: &Graph) -> Result<Self, ConsensusError> {
        let n = graph.node_count();
        if w.nrows() != n || w.ncols() != n {
            return Err(ConsensusError::Shape {
                rows: w.nrows(),
                cols: w.ncols(),
                n,
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if v < 0.0 {
                    return Err(ConsensusError::Negative(i, j));
                }
                if v > 0.0 && i != j && !graph.has_edge(i, j) {
                    return Err(ConsensusError::OffGraph(i, j));
                }
            }
            let sum = w.row(i).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ConsensusError::NotStochastic { row: i, sum });
            }
        }
        Ok(Self(w))
    }

    /// `w_jn = 1 / (1 + max(deg_j, deg_n))` on edges, diagonal takes the
    /// remainder. Symmetric, hence doubly stochastic.
    pub fn metropolis(graph: &Graph) -> Self {
        let n = graph.node_count();
        let mut w = DMatrix::zeros(n, n);
        for &(a, b) in graph.edges() {
            let v = 1.0 / (1.0 + graph.degree(a).max(graph.degree(b)) as f64);
            w[(a, b)] = v;
            w[(b, a)] = v;
        }
        for i in 0..n {
            let off: f64 = graph.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self(w)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn weight(&self, to: usize, from: usize) -> f64 {
        self.0[(to, from)]
    }
}

/// `x(t+1) = W x(t)`.
pub fn average_consensus_step(states: &[f64], weights: &ConsensusWeights) -> Result<Vec<f64>, ConsensusError> {
    let n = weights.0.nrows();
    if states.len() != n {
        return Err(ConsensusError::StateCount {
            states: states.len(),
            n,
        });
    }
    let x = DVector::from_column_slice(states);
    Ok((&weights.0 * x).iter().copied().collect())
}

/// A value received from a neighbor together with the weight it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Received {
    pub node: usize,
    pub value: f64,
    pub weight: f64,
}

/// Splits `values` into survivors after removing up to `f` entries strictly
/// above `own` (largest first) and up to `f` strictly below (smallest
/// first). Equal magnitudes are trimmed lowest node index first.
fn trim<T: Copy>(items: &[T], own: f64, f: usize, key: impl Fn(&T) -> (f64, usize)) -> Vec<T> {
    let mut above: Vec<T> = items.iter().copied().filter(|i| key(i).0 > own).collect();
    let mut below: Vec<T> = items.iter().copied().filter(|i| key(i).0 < own).collect();
    let equal = items.iter().copied().filter(|i| key(i).0 == own);
    above.sort_by(|a, b| key(b).0.total_cmp(&key(a).0).then(key(a).1.cmp(&key(b).1)));
    below.sort_by(|a, b| key(a).0.total_cmp(&key(b).0).then(key(a).1.cmp(&key(b).1)));
    let above = above.into_iter().skip(f);
    let below = below.into_iter().skip(f);
    let mut out: Vec<T> = above.chain(below).chain(equal).collect();
    out.sort_by_key(|i| key(i).1);
    out
}

/// Neighbor values surviving W-MSR trimming, ordered by node index.
pub fn wmsr_survivors(own: f64, neighbors: &[Received], f: usize) -> Vec<Received> {
    trim(neighbors, own, f, |r| (r.value, r.node))
}

/// W-MSR update: trim, then average survivors and self with weights
/// renormalized to sum to one.
pub fn wmsr_step(own: f64, neighbors: &[Received], f: usize, self_weight: f64) -> f64 {
    let kept = wmsr_survivors(own, neighbors, f);
    let total = self_weight + kept.iter().map(|r| r.weight).sum::<f64>();
    if total <= 0.0 || kept.is_empty() {
        return own;
    }
    let avg = (self_weight * own + kept.iter().map(|r| r.weight * r.value).sum::<f64>()) / total;
    // A convex combination cannot leave the hull of its inputs; rounding can, by an ulp.
    let (lo, hi) = kept
        .iter()
        .fold((own, own), |(lo, hi), r| (lo.min(r.value), hi.max(r.value)));
    avg.clamp(lo, hi)
}

/// Equal weights for `neighbors` and self.
pub fn uniform(neighbors: &[(usize, f64)]) -> (Vec<Received>, f64) {
    let w = 1.0 / (neighbors.len() + 1) as f64;
    (
        neighbors
            .iter()
            .map(|&(node, value)| Received { node, value, weight: w })
            .collect(),
        w,
    )
}

/// Device class in the relative-measurement estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    /// Measures its own parameter directly.
    Reliable { value: f64 },
    /// Sees only relative measurements `ξ_ln = p_l - p_n`.
    Normal,
    /// Broadcasts whatever the attacker chooses.
    Malicious,
}

/// Neighbor state paired with the relative measurement toward it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeNeighbor {
    pub node: usize,
    pub state: f64,
    /// `ξ_ln`.
    pub xi: f64,
    pub weight: f64,
}

/// Step values `s_ln = x_l - x_n - ξ_ln` that survive trimming of the `f`
/// largest positive and `f` smallest negative ones.
pub fn leblanc_survivors(own_state: f64, neighbors: &[RelativeNeighbor], f: usize) -> Vec<(RelativeNeighbor, f64)> {
    let steps: Vec<(RelativeNeighbor, f64)> = neighbors.iter().map(|nb| (*nb, nb.state - own_state - nb.xi)).collect();
    trim(&steps, 0.0, f, |(nb, s)| (*s, nb.node))
}

/// One update of the relative-measurement resilient estimator. Reliable
/// nodes return their measured value; malicious nodes keep `own_state`
/// (their broadcast is set by the caller).
pub fn leblanc_estimator_step(kind: NodeKind, own_state: f64, neighbors: &[RelativeNeighbor], f: usize) -> f64 {
    match kind {
        NodeKind::Reliable { value } => value,
        NodeKind::Malicious => own_state,
        NodeKind::Normal => {
            own_state
                + leblanc_survivors(own_state, neighbors, f)
                    .iter()
                    .map(|(nb, s)| nb.weight * s)
                    .sum::<f64>()
        }
    }
}

/// Gains for [`adaptive_weight_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveGains {
    pub alpha: f64,
    pub beta: f64,
    /// Scale of neighbor disagreement at which a neighbor's weight halves.
    pub c_consensus: f64,
    /// Scale of measurement residual at which the innovation gain halves.
    pub c_innovation: f64,
}

/// `1 / (1 + (d/c)^2)`.
pub fn attenuation(d: f64, c: f64) -> f64 {
    1.0 / (1.0 + (d / c).powi(2))
}

/// Consensus+innovations step whose neighbor weights and innovation gain
/// shrink with the size of the disagreement they carry.
pub fn adaptive_weight_step(
    own: &DVector<f64>,
    neighbors: &[&DVector<f64>],
    measurement: &DVector<f64>,
    h: &DMatrix<f64>,
    gains: &AdaptiveGains,
) -> DVector<f64> {
    let mut consensus = DVector::zeros(own.len());
    for xl in neighbors {
        let diff = own - *xl;
        consensus += &diff * attenuation(diff.norm(), gains.c_consensus);
    }
    let residual = measurement - h * own;
    let g = attenuation(residual.norm(), gains.c_innovation);
    own - consensus * gains.beta + h.transpose() * residual * (gains.alpha * g)
}

/// One row of a consensus trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusSample {
    pub t: u64,
    pub node: usize,
    pub value: f64,
    pub error: f64,
}

/// Averaging with fixed weights; `error = |x_n - initial mean|`.
pub fn run_average_consensus(
    weights: &ConsensusWeights,
    initial: &[f64],
    steps: u64,
) -> Result<Vec<ConsensusSample>, ConsensusError> {
    let mean = initial.iter().sum::<f64>() / initial.len() as f64;
    let mut x = initial.to_vec();
    let mut out = Vec::new();
    for t in 0..=steps {
        out.extend(x.iter().enumerate().map(|(node, &value)| ConsensusSample {
            t,
            node,
            value,
            error: (value - mean).abs(),
        }));
        if t < steps {
            x = average_consensus_step(&x, weights)?;
        }
    }
    Ok(out)
}

/// W-MSR on `graph` with uniform weights. `byzantine(node, t)` returns the
/// value a byzantine node broadcasts (`None` marks a normal node). The
/// trace covers normal nodes; `error` is the distance to the normal mean.
pub fn run_wmsr(
    graph: &Graph,
    initial: &[f64],
    f: usize,
    steps: u64,
    mut byzantine: impl FnMut(usize, u64) -> Option<f64>,
) -> Vec<ConsensusSample> {
    let n = graph.node_count();
    let mut x = initial.to_vec();
    let mut out = Vec::new();
    for t in 0..=steps {
        let sent: Vec<(f64, bool)> = (0..n)
            .map(|i| match byzantine(i, t) {
                Some(v) => (v, true),
                None => (x[i], false),
            })
            .collect();
        let normal: Vec<usize> = (0..n).filter(|&i| !sent[i].1).collect();
        let mean = normal.iter().map(|&i| x[i]).sum::<f64>() / normal.len().max(1) as f64;
        out.extend(normal.iter().map(|&node| ConsensusSample {
            t,
            node,
            value: x[node],
            error: (x[node] - mean).abs(),
        }));
        if t == steps {
            break;
        }
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if sent[i].1 {
                    return x[i];
                }
                let nb: Vec<(usize, f64)> = graph.neighbors(i).iter().map(|&j| (j, sent[j].0)).collect();
                let (recv, w) = uniform(&nb);
                wmsr_step(x[i], &recv, f, w)
            })
            .collect();
        x = next;
    }
    out
}

/// Relative-measurement estimator with noiseless `ξ_ln = p_l - p_n`,
/// neighbor weights `1/(deg+1)`. `error = |x_n - p_n|` over non-malicious
/// nodes. Malicious nodes broadcast `malicious(node, t)`.
pub fn run_leblanc(
    graph: &Graph,
    truth: &[f64],
    kinds: &[NodeKind],
    f: usize,
    steps: u64,
    mut malicious: impl FnMut(usize, u64) -> f64,
) -> Vec<ConsensusSample> {
    let n = graph.node_count();
    let mut x: Vec<f64> = kinds
        .iter()
        .map(|k| match k {
            NodeKind::Reliable { value } => *value,
            _ => 0.0,
        })
        .collect();
    let mut out = Vec::new();
    for t in 0..=steps {
        let sent: Vec<f64> = (0..n)
            .map(|i| {
                if kinds[i] == NodeKind::Malicious {
                    malicious(i, t)
                } else {
                    x[i]
                }
            })
            .collect();
        for node in (0..n).filter(|&i| kinds[i] != NodeKind::Malicious) {
            out.push(ConsensusSample {
                t,
                node,
                value: x[node],
                error: (x[node] - truth[node]).abs(),
            });
        }
        if t == steps {
            break;
        }
        x = (0..n)
            .map(|i| {
                let w = 1.0 / (graph.degree(i) + 1) as f64;
                let nb: Vec<RelativeNeighbor> = graph
                    .neighbors(i)
                    .iter()
                    .map(|&l| RelativeNeighbor {
                        node: l,
                        state: sent[l],
                        xi: truth[l] - truth[i],
                        weight: w,
                    })
                    .collect();
                leblanc_estimator_step(kinds[i], x[i], &nb, f)
            })
            .collect();
    }
    out
}

/// Scalar adaptive-weight estimation of `theta`: every normal node measures
/// `theta + noise_std * w` each round (noise drawn from `seed`) and runs
/// [`adaptive_weight_step`] from zero. `byzantine(node, t)` gives a
/// misbehaving node's broadcast. The trace covers normal nodes with
/// `error = |x_n - theta|`.
pub fn run_adaptive(
    graph: &Graph,
    theta: f64,
    noise_std: f64,
    gains: &AdaptiveGains,
    steps: u64,
    seed: u64,
    mut byzantine: impl FnMut(usize, u64) -> Option<f64>,
) -> Vec<ConsensusSample> {
    let n = graph.node_count();
    let h = DMatrix::from_element(1, 1, 1.0);
    let mut x = vec![0.0; n];
    let mut out = Vec::new();
    for t in 0..=steps {
        let sent: Vec<(DVector<f64>, bool)> = (0..n)
            .map(|i| match byzantine(i, t) {
                Some(v) => (DVector::from_element(1, v), true),
                None => (DVector::from_element(1, x[i]), false),
            })
            .collect();
        out.extend((0..n).filter(|&i| !sent[i].1).map(|node| ConsensusSample {
            t,
            node,
            value: x[node],
            error: (x[node] - theta).abs(),
        }));
        if t == steps {
            break;
        }
        x = (0..n)
            .map(|i| {
                if sent[i].1 {
                    return x[i];
                }
                let noise: f64 = stream(seed, StreamTag::Noise, i as u64, t).sample(StandardNormal);
                let y = DVector::from_element(1, theta + noise_std * noise);
                let nb: Vec<&DVector<f64>> = graph.neighbors(i).iter().map(|&l| &sent[l].0).collect();
                adaptive_weight_step(&sent[i].0, &nb, &y, &h, gains)[0]
            })
            .collect();
    }
    out
}
