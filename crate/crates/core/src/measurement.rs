//! Ground-truth parameters and noisy linear measurements `y_n(t) = H_n θ + w_n(t)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{stream, StreamTag};

#[derive(Debug, Error, PartialEq)]
pub enum MeasurementError {
    #[error("parameter norm {norm} exceeds energy bound {eta}")]
    EnergyBound { norm: f64, eta: f64 },
    #[error("invalid range [{low}, {high}]")]
    InvalidRange { low: f64, high: f64 },
    #[error("node {node}: {msg}")]
    InvalidNode { node: usize, msg: String },
    #[error("measurement spec has no nodes")]
    Empty,
    #[error("sector {sector} outside [0, {m})")]
    SectorOutOfRange { sector: usize, m: usize },
    #[error("theta has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Unknown parameter with a known bound on its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    theta: DVector<f64>,
    eta: f64,
}

impl Parameter {
    pub fn new(theta: DVector<f64>, eta: f64) -> Result<Self, MeasurementError> {
        let norm = theta.norm();
        // allow rounding slack on the bound itself
        if norm > eta * (1.0 + 1e-12) {
            return Err(MeasurementError::EnergyBound { norm, eta });
        }
        Ok(Self { theta, eta })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Components i.i.d. uniform on `[low, high]`, with
/// `eta = max(|low|, |high|) * sqrt(m)`.
pub fn sample_parameter(m: usize, low: f64, high: f64, seed: u64) -> Result<Parameter, MeasurementError> {
    if !(low <= high) || !low.is_finite() || !high.is_finite() {
        return Err(MeasurementError::InvalidRange { low, high });
    }
    let mut rng = stream(seed, StreamTag::Parameter, m as u64, 0);
    let theta = DVector::from_iterator(m, (0..m).map(|_| low + (high - low) * rng.random::<f64>()));
    let eta = low.abs().max(high.abs()) * (m as f64).sqrt();
    Parameter::new(theta, eta)
}

/// Per-node measurement matrices and noise covariances.
#[derive(Debug, Clone)]
pub struct MeasurementSpec {
    h: Vec<DMatrix<f64>>,
    sigma: Vec<DMatrix<f64>>,
    // w = factor * z with z standard normal, factor * factor^T = sigma
    noise_factor: Vec<DMatrix<f64>>,
}

/// One noisy observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub node: usize,
    pub time: u64,
    pub value: DVector<f64>,
}

impl MeasurementSpec {
    pub fn new(h: Vec<DMatrix<f64>>, sigma: Vec<DMatrix<f64>>) -> Result<Self, MeasurementError> {
        let m = h.first().ok_or(MeasurementError::Empty)?.ncols();
        if h.len() != sigma.len() {
            return Err(MeasurementError::InvalidNode {
                node: h.len().min(sigma.len()),
                msg: format!("{} H matrices but {} covariances", h.len(), sigma.len()),
            });
        }
        let mut noise_factor = Vec::with_capacity(h.len());
        for (node, (hn, sn)) in h.iter().zip(&sigma).enumerate() {
            let bad = |msg: String| MeasurementError::InvalidNode { node, msg };
            if hn.ncols() != m {
                return Err(bad(format!("H has {} columns, expected {m}", hn.ncols())));
            }
            let k = hn.nrows();
            if sn.nrows() != k || sn.ncols() != k {
                return Err(bad(format!("covariance must be {k}x{k}")));
            }
            noise_factor.push(covariance_factor(sn).map_err(bad)?);
        }
        Ok(Self { h, sigma, noise_factor })
    }

    pub fn node_count(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.h[0].ncols()
    }

    pub fn h(&self, node: usize) -> &DMatrix<f64> {
        &self.h[node]
    }

    pub fn h_list(&self) -> &[DMatrix<f64>] {
        &self.h
    }

    pub fn sigma(&self, node: usize) -> &DMatrix<f64> {
        &self.sigma[node]
    }

    /// `H_n θ + w` with `w ~ N(0, Σ_n)` drawn from the `(seed, node, t)` stream.
    pub fn measure(&self, theta: &Parameter, node: usize, t: u64, seed: u64) -> Measurement {
        let factor = &self.noise_factor[node];
        let k = factor.nrows();
        let mut rng = stream(seed, StreamTag::Noise, node as u64, t);
        let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let value = &self.h[node] * theta.theta() + factor * z;
        Measurement { node, time: t, value }
    }

    /// `10 log10(‖H_n θ‖² / tr Σ_n)`; infinite for noiseless nodes.
    pub fn snr_db(&self, node: usize, theta: &Parameter) -> f64 {
        let signal = (&self.h[node] * theta.theta()).norm_squared();
        10.0 * (signal / self.sigma[node].trace()).log10()
    }

    /// Mean of the per-node SNR values in dB.
    pub fn mean_snr_db(&self, theta: &Parameter) -> f64 {
        (0..self.node_count()).map(|n| self.snr_db(n, theta)).sum::<f64>() / self.node_count() as f64
    }

    /// Network-level SNR `10 log10(‖θ‖² / Σ_n tr Σ_n)`.
    pub fn network_snr_db(&self, theta: &Parameter) -> f64 {
        let noise: f64 = self.sigma.iter().map(|s| s.trace()).sum();
        10.0 * (theta.theta().norm_squared() / noise).log10()
    }
}

fn covariance_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
    let k = sigma.nrows();
    let scale = sigma.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err("covariance is not symmetric".into());
    }
    let off_diagonal = (0..k).any(|i| (0..k).any(|j| i != j && sigma[(i, j)] != 0.0));
    if !off_diagonal {
        if let Some(i) = (0..k).find(|&i| sigma[(i, i)] < 0.0) {
            return Err(format!("negative variance at {i}"));
        }
        return Ok(DMatrix::from_diagonal(&sigma.diagonal().map(f64::sqrt)));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    if eig.eigenvalues.min() < -1e-12 * scale {
        return Err("covariance is not positive semidefinite".into());
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

/// Sector-selector model: node `n` measures component `assignment[n]` only,
/// with scalar noise variance `variance`.
pub fn sector_selector_spec(
    m: usize,
    assignment: &[usize],
    variance: f64,
) -> Result<MeasurementSpec, MeasurementError> {
    let mut h = Vec::with_capacity(assignment.len());
    for &sector in assignment {
        if sector >= m {
            return Err(MeasurementError::SectorOutOfRange { sector, m });
        }
        let mut row = DMatrix::zeros(1, m);
        row[(0, sector)] = 1.0;
        h.push(row);
    }
    let sigma = vec![DMatrix::from_element(1, 1, variance); assignment.len()];
    MeasurementSpec::new(h, sigma)
}

/// Row-major sector index of a point in a `grid x grid` partition of
/// `[0, side]^2`. Points on the far edge fall in the last row/column.
pub fn sector_of(position: [f64; 2], side: f64, grid: usize) -> usize {
    let cell = |v: f64| (((v / side) * grid as f64).floor().max(0.0) as usize).min(grid - 1);
    cell(position[1]) * grid + cell(position[0])
}

/// Index of the middle sector of a `grid x grid` partition.
pub fn center_sector(grid: usize) -> usize {
    (grid / 2) * grid + grid / 2
}

pub fn assign_sectors(positions: &[[f64; 2]], side: f64, grid: usize) -> Vec<usize> {
    positions.iter().map(|&p| sector_of(p, side, grid)).collect()
}
