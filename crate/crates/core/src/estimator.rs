//! Consensus+innovations distributed estimation with local consistency
//! checks.
//!
//! Every uncompromised agent keeps an estimate `x_n(t)`, a running average
//! of its measurements `ȳ_n(t)` and a latched flag. Each synchronous round:
//!
//! 1. all agents broadcast (uncompromised agents send `x_n(t)`);
//! 2. `ȳ_n` absorbs the new measurement and `x_n` takes a
//!    consensus+innovations step against the received states;
//! 3. an agent raises its flag once any received state lies farther than
//!    `γ_t` from its own, and `γ_t` follows an error-buffer plus
//!    noise-buffer recursion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Graph, Laplacian};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("no gains with spectral radius < 1 in the search grid (best rho = {best_rho:.6} at alpha = {alpha:e}, beta = {beta:e}; lambda_max(L) = {lambda_max:.4})")]
    GainSearch {
        best_rho: f64,
        alpha: f64,
        beta: f64,
        lambda_max: f64,
    },
}

/// Latched adversary indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Flag {
    #[default]
    NoAttack,
    Attack,
}

impl Flag {
    pub fn as_u8(self) -> u8 {
        match self {
            Flag::NoAttack => 0,
            Flag::Attack => 1,
        }
    }
}

/// Gains and threshold constants shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Innovations weight.
    pub alpha: f64,
    /// Consensus weight.
    pub beta: f64,
    /// Noise-buffer base `K`.
    pub big_k: f64,
    /// Noise-buffer decay exponent, in `(0, 1/2)`.
    pub tau: f64,
    /// Error-buffer decay rate, in `(0, 1]`.
    pub r1: f64,
    /// Energy bound on the parameter.
    pub eta: f64,
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |s: String| Err(EstimatorError::InvalidParams(s));
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.big_k > 0.0) {
            return bad(format!(
                "alpha, beta and K must be positive (got {}, {}, {})",
                self.alpha, self.beta, self.big_k
            ));
        }
        if !(self.tau > 0.0 && self.tau < 0.5) {
            return bad(format!("tau must lie in (0, 0.5), got {}", self.tau));
        }
        if !(self.r1 > 0.0 && self.r1 <= 1.0) {
            return bad(format!("r1 must lie in (0, 1], got {}", self.r1));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and nonnegative, got {}", self.eta));
        }
        Ok(())
    }
}

/// State held by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub node: usize,
    pub x: DVector<f64>,
    pub ybar: DVector<f64>,
    pub flag: Flag,
}

/// Adaptive detection threshold `γ_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdState {
    pub gamma: f64,
    pub t: u64,
}

impl ThresholdState {
    /// `γ_0 = 2 η sqrt(N)`.
    pub fn initial(eta: f64, node_count: usize) -> Self {
        Self {
            gamma: 2.0 * eta * (node_count as f64).sqrt(),
            t: 0,
        }
    }

    /// `γ_{t+1} = (1 - r1) γ_t + α 2K / (t + 1)^τ`.
    pub fn step(self, p: &EstimatorParams) -> Self {
        let noise_buffer = p.alpha * 2.0 * p.big_k / ((self.t + 1) as f64).powf(p.tau);
        Self {
            gamma: (1.0 - p.r1) * self.gamma + noise_buffer,
            t: self.t + 1,
        }
    }
}

/// `ȳ(t) = t/(t+1) ȳ(t-1) + 1/(t+1) y(t)` for `t >= 1`.
pub fn update_running_average(
    ybar_prev: &DVector<f64>,
    y: &DVector<f64>,
    t: u64,
) -> Result<DVector<f64>, EstimatorError> {
    if ybar_prev.len() != y.len() {
        return Err(EstimatorError::Dimension(format!(
            "running average has length {}, measurement {}",
            ybar_prev.len(),
            y.len()
        )));
    }
    if t == 0 {
        return Err(EstimatorError::InvalidParams(
            "running average update needs t >= 1".into(),
        ));
    }
    let tf = t as f64;
    Ok(ybar_prev * (tf / (tf + 1.0)) + y * (1.0 / (tf + 1.0)))
}

/// `x - β Σ_l (x - x_l) + α Hᵀ(ȳ - H x)`.
pub fn consensus_innovations_step<'a>(
    x_self: &DVector<f64>,
    neighbor_states: impl IntoIterator<Item = &'a DVector<f64>>,
    ybar: &DVector<f64>,
    h: &DMatrix<f64>,
    params: &EstimatorParams,
) -> Result<DVector<f64>, EstimatorError> {
    let m = x_self.len();
    if h.ncols() != m || h.nrows() != ybar.len() {
        return Err(EstimatorError::Dimension(format!(
            "H is {}x{}, x has length {m}, ybar {}",
            h.nrows(),
            h.ncols(),
            ybar.len()
        )));
    }
    let mut disagreement = DVector::zeros(m);
    for xl in neighbor_states {
        if xl.len() != m {
            return Err(EstimatorError::Dimension(format!(
                "neighbor state has length {}, expected {m}",
                xl.len()
            )));
        }
        disagreement += x_self - xl;
    }
    let innovation = h.transpose() * (ybar - h * x_self);
    Ok(x_self - disagreement * params.beta + innovation * params.alpha)
}

/// Latches `Attack` once any neighbor lies strictly farther than `gamma`.
pub fn detect_step<'a>(
    x_self: &DVector<f64>,
    neighbor_states: impl IntoIterator<Item = &'a DVector<f64>>,
    flag: Flag,
    gamma: f64,
) -> Flag {
    if flag == Flag::Attack {
        return Flag::Attack;
    }
    let exceeded = neighbor_states.into_iter().any(|xl| (x_self - xl).norm() > gamma);
    if exceeded {
        Flag::Attack
    } else {
        Flag::NoAttack
    }
}

/// The noiseless, attack-free error dynamics
/// `M = I - β (L ⊗ I_m) - α blockdiag(H_nᵀ H_n)`, node-major ordering.
pub fn error_dynamics_matrix(l: &Laplacian, h_list: &[DMatrix<f64>], alpha: f64, beta: f64) -> DMatrix<f64> {
    let n = l.matrix().nrows();
    let m = h_list.first().map_or(0, |h| h.ncols());
    let mut out = DMatrix::identity(n * m, n * m);
    for a in 0..n {
        for b in 0..n {
            let lab = l.matrix()[(a, b)];
            if lab != 0.0 {
                for i in 0..m {
                    out[(a * m + i, b * m + i)] -= beta * lab;
                }
            }
        }
        let g = h_list[a].transpose() * &h_list[a];
        for i in 0..m {
            for j in 0..m {
                out[(a * m + i, a * m + j)] -= alpha * g[(i, j)];
            }
        }
    }
    out
}

/// Spectral radius of the error dynamics matrix. `M` is symmetric, so the
/// radius is the largest absolute eigenvalue. When every `H_nᵀ H_n` is
/// diagonal the matrix splits into one `N x N` block per component.
pub fn spectral_radius(l: &Laplacian, h_list: &[DMatrix<f64>], alpha: f64, beta: f64) -> f64 {
    let grams: Vec<DMatrix<f64>> = h_list.iter().map(|h| h.transpose() * h).collect();
    let diagonal = grams
        .iter()
        .all(|g| g.is_square() && (0..g.nrows()).all(|i| (0..g.ncols()).all(|j| i == j || g[(i, j)] == 0.0)));
    let abs_max = |mat: DMatrix<f64>| mat.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !diagonal {
        return abs_max(error_dynamics_matrix(l, h_list, alpha, beta));
    }
    let n = l.matrix().nrows();
    let m = grams.first().map_or(0, |g| g.nrows());
    (0..m)
        .map(|i| {
            let mut block = -l.matrix() * beta;
            for a in 0..n {
                block[(a, a)] += 1.0 - alpha * grams[a][(i, i)];
            }
            abs_max(block)
        })
        .fold(0.0, f64::max)
}

/// Gains produced by [`choose_gains`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub alpha: f64,
    pub beta: f64,
    pub r1: f64,
    pub spectral_radius: f64,
}

pub const ALPHA_GRID: (f64, f64, usize) = (1e-3, 1e-1, 9);
pub const BETA_GRID_POINTS: usize = 24;
/// Spectral radii within this distance of 1 count as non-contracting.
pub const RHO_MARGIN: f64 = 1e-10;

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Grid search for `(α, β)` minimizing `ρ(M)`, with `r1 = (1 - ρ)/2`.
///
/// α is log-spaced over `[1e-3, 1e-1]`; β is log-spaced over
/// `[1e-3, 0.99] * 2/λ_max(L)`. Ties keep the earliest grid point.
pub fn choose_gains(l: &Laplacian, h_list: &[DMatrix<f64>], m: usize) -> Result<Gains, EstimatorError> {
    if h_list.iter().any(|h| h.ncols() != m) {
        return Err(EstimatorError::Dimension(format!("all H_n must have {m} columns")));
    }
    let lambda_max = l.max_eigenvalue();
    let beta_cap = if lambda_max > 0.0 { 2.0 / lambda_max } else { 1.0 };
    let alphas = log_space(ALPHA_GRID.0, ALPHA_GRID.1, ALPHA_GRID.2);
    let betas = log_space(1e-3 * beta_cap, 0.99 * beta_cap, BETA_GRID_POINTS);
    let pairs: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();

    #[cfg(feature = "parallel")]
    let rhos: Vec<f64> = {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|&(a, b)| spectral_radius(l, h_list, a, b))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rhos: Vec<f64> = pairs.iter().map(|&(a, b)| spectral_radius(l, h_list, a, b)).collect();

    let (best, &rho) = rhos.iter().enumerate().fold(
        (0, &f64::INFINITY),
        |acc, (i, r)| if *r < *acc.1 { (i, r) } else { acc },
    );
    let (alpha, beta) = pairs[best];
    // an unobservable mode shows up as an eigenvalue of 1 up to rounding
    if !(rho < 1.0 - RHO_MARGIN) {
        return Err(EstimatorError::GainSearch {
            best_rho: rho,
            alpha,
            beta,
            lambda_max,
        });
    }
    Ok(Gains {
        alpha,
        beta,
        r1: (1.0 - rho) / 2.0,
        spectral_radius: rho,
    })
}

/// How an agent starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `x_n(0) = 0`.
    #[default]
    Zero,
    /// `x_n(0) = θ`; used for fixed-point checks.
    Truth,
}

/// Network of agents advancing in synchronous rounds.
///
/// Agents marked byzantine keep no meaningful state; their broadcasts come
/// from the closure passed to [`DistributedEstimator::round`]. Every other
/// agent runs the protocol.
#[derive(Debug, Clone)]
pub struct DistributedEstimator<'g> {
    graph: &'g Graph,
    h: Vec<DMatrix<f64>>,
    params: EstimatorParams,
    byzantine: Vec<bool>,
    agents: Vec<AgentState>,
    threshold: ThresholdState,
    t: u64,
}

impl<'g> DistributedEstimator<'g> {
    pub fn new(
        graph: &'g Graph,
        h: Vec<DMatrix<f64>>,
        params: EstimatorParams,
        byzantine: Vec<bool>,
        initial: &DVector<f64>,
    ) -> Result<Self, EstimatorError> {
        params.validate()?;
        let n = graph.node_count();
        if h.len() != n || byzantine.len() != n {
            return Err(EstimatorError::Dimension(format!(
                "{n} nodes but {} measurement matrices and {} roles",
                h.len(),
                byzantine.len()
            )));
        }
        let m = initial.len();
        if let Some(bad) = h.iter().position(|hn| hn.ncols() != m) {
            return Err(EstimatorError::Dimension(format!("H_{bad} does not have {m} columns")));
        }
        let agents = (0..n)
            .map(|node| AgentState {
                node,
                x: initial.clone(),
                ybar: DVector::zeros(h[node].nrows()),
                flag: Flag::NoAttack,
            })
            .collect();
        Ok(Self {
            graph,
            h,
            params,
            byzantine,
            agents,
            threshold: ThresholdState::initial(params.eta, n),
            t: 0,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn gamma(&self) -> f64 {
        self.threshold.gamma
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn is_byzantine(&self, node: usize) -> bool {
        self.byzantine[node]
    }

    /// One synchronous round at time `t`.
    ///
    /// `measurements[n]` is `y_n(t)` as seen by agent `n` (already falsified
    /// where the attacker controls the sensor). `byzantine_broadcast` is
    /// called as `(node, uncompromised neighbor states, γ_t)` for every
    /// byzantine agent and returns what that agent sends this round.
    pub fn round<F>(&mut self, measurements: &[DVector<f64>], mut byzantine_broadcast: F) -> Result<(), EstimatorError>
    where
        F: FnMut(usize, &[&DVector<f64>], f64) -> DVector<f64>,
    {
        let n = self.graph.node_count();
        if measurements.len() != n {
            return Err(EstimatorError::Dimension(format!(
                "{} measurements for {n} nodes",
                measurements.len()
            )));
        }
        let gamma = self.threshold.gamma;

        // message passing
        let mut sent: Vec<DVector<f64>> = Vec::with_capacity(n);
        for node in 0..n {
            if self.byzantine[node] {
                let honest: Vec<&DVector<f64>> = self
                    .graph
                    .neighbors(node)
                    .iter()
                    .filter(|&&l| !self.byzantine[l])
                    .map(|&l| &self.agents[l].x)
                    .collect();
                sent.push(byzantine_broadcast(node, &honest, gamma));
            } else {
                sent.push(self.agents[node].x.clone());
            }
        }

        // state update and detection
        let t = self.t;
        for (node, y) in measurements.iter().enumerate().take(n) {
            if self.byzantine[node] {
                continue;
            }
            let agent = &self.agents[node];
            let ybar = if t == 0 {
                if y.len() != agent.ybar.len() {
                    return Err(EstimatorError::Dimension(format!(
                        "node {node}: measurement length {}, expected {}",
                        y.len(),
                        agent.ybar.len()
                    )));
                }
                y.clone()
            } else {
                update_running_average(&agent.ybar, y, t)?
            };
            let received = || self.graph.neighbors(node).iter().map(|&l| &sent[l]);
            let x = consensus_innovations_step(&agent.x, received(), &ybar, &self.h[node], &self.params)?;
            let flag = detect_step(&agent.x, received(), agent.flag, gamma);
            let agent = &mut self.agents[node];
            agent.ybar = ybar;
            agent.x = x;
            agent.flag = flag;
        }
        self.threshold = self.threshold.step(&self.params);
        self.t += 1;
        Ok(())
    }
}
