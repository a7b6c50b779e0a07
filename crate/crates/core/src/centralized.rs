//! Centralized baselines: least-squares residual detection, column-space
//! (stealthy) attacks, sparse attack identification, sequence detection
//! for linear dynamics, and counting-rule decision fusion.

use itertools::Itertools;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{stream, StreamTag};
use crate::topology::numerical_rank;

/// Upper bound on support sets examined by [`CentralModel::identify_l0`].
pub const L0_SUPPORT_BUDGET: u64 = 1 << 20;
/// Default per-row consistency tolerance for [`CentralModel::identify_l0`].
pub const L0_EPS: f64 = 1e-8;
/// Attack rows count as nonzero above this fraction of `‖y‖`.
pub const SUPPORT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum CentralError {
    #[error("measurement matrix is {rows}x{cols} with rank {rank}; full column rank required")]
    RankDeficient { rows: usize, cols: usize, rank: usize },
    #[error("measurement has {got} rows, model has {expected}")]
    Length { got: usize, expected: usize },
    #[error("detection threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("{count} support sets exceed the budget of {budget}")]
    Budget { count: u64, budget: u64 },
    #[error("no parameter is consistent with y after removing up to {s_max} rows")]
    NoConsistent { s_max: usize },
    #[error("LP solver failed: {0}")]
    Solver(String),
    #[error("invalid fusion problem: {0}")]
    Fusion(String),
    #[error("empty measurement sequence")]
    EmptySequence,
}

/// Stacked measurement model `y = Hθ + w + a` with a residual threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralModel {
    h: DMatrix<f64>,
    tau_detect: f64,
}

/// Outcome of sparse attack identification.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub theta: DVector<f64>,
    /// `y - Hθ̃`.
    pub attack: DVector<f64>,
    pub support: Vec<usize>,
}

fn full_rank(h: &DMatrix<f64>) -> Result<(), CentralError> {
    let rank = numerical_rank(h);
    if rank < h.ncols() {
        return Err(CentralError::RankDeficient {
            rows: h.nrows(),
            cols: h.ncols(),
            rank,
        });
    }
    Ok(())
}

fn least_squares(h: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    h.clone()
        .svd(true, true)
        .solve(y, 0.0)
        .expect("both singular vector sets were requested")
}

fn support_of(attack: &DVector<f64>, y: &DVector<f64>) -> Vec<usize> {
    let tol = SUPPORT_TOLERANCE * y.norm();
    attack.iter().positions(|a| a.abs() > tol).collect()
}

impl CentralModel {
    pub fn new(h: DMatrix<f64>, tau_detect: f64) -> Result<Self, CentralError> {
        if !(tau_detect.is_finite() && tau_detect > 0.0) {
            return Err(CentralError::Threshold(tau_detect));
        }
        Ok(Self { h, tau_detect })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn tau_detect(&self) -> f64 {
        self.tau_detect
    }

    fn check(&self, y: &DVector<f64>) -> Result<(), CentralError> {
        if y.len() != self.h.nrows() {
            return Err(CentralError::Length {
                got: y.len(),
                expected: self.h.nrows(),
            });
        }
        full_rank(&self.h)
    }

    /// `argmin ‖y - Hθ‖₂` via SVD.
    pub fn ls_estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>, CentralError> {
        self.check(y)?;
        Ok(least_squares(&self.h, y))
    }

    /// `‖y - Hθ̂‖₂`.
    pub fn residual(&self, y: &DVector<f64>) -> Result<f64, CentralError> {
        let theta = self.ls_estimate(y)?;
        Ok((y - &self.h * theta).norm())
    }

    pub fn residual_detect(&self, y: &DVector<f64>) -> Result<bool, CentralError> {
        Ok(self.residual(y)? > self.tau_detect)
    }

    /// `a = Hc`, invisible to the residual detector.
    pub fn stealthy_attack(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.h * c
    }

    /// Sparsest attack explaining noiseless `y`: tries every set of up to
    /// `s_max` removed rows, smallest first and lexicographically within a
    /// size, and keeps the first whose remaining rows fit some θ to within
    /// `eps` per row.
    pub fn identify_l0(&self, y: &DVector<f64>, s_max: usize, eps: f64) -> Result<IdentificationResult, CentralError> {
        self.check(y)?;
        let p = self.h.nrows();
        let s_max = s_max.min(p);
        let count: u64 = (0..=s_max).map(|s| binomial(p as u64, s as u64)).sum();
        if count > L0_SUPPORT_BUDGET {
            return Err(CentralError::Budget {
                count,
                budget: L0_SUPPORT_BUDGET,
            });
        }
        for s in 0..=s_max {
            for removed in (0..p).combinations(s) {
                let kept: Vec<usize> = (0..p).filter(|i| !removed.contains(i)).collect();
                let h_kept = self.h.select_rows(&kept);
                if numerical_rank(&h_kept) < self.h.ncols() {
                    continue;
                }
                let y_kept = y.select_rows(&kept);
                let theta = least_squares(&h_kept, &y_kept);
                if (y_kept - &h_kept * &theta).amax() < eps {
                    let attack = y - &self.h * &theta;
                    let support = support_of(&attack, y);
                    return Ok(IdentificationResult { theta, attack, support });
                }
            }
        }
        Err(CentralError::NoConsistent { s_max })
    }

    /// `argmin ‖y - Hθ‖₁` as the LP `min Σe` with `-e ≤ y - Hθ ≤ e`.
    pub fn identify_l1(&self, y: &DVector<f64>) -> Result<IdentificationResult, CentralError> {
        self.check(y)?;
        let (p, m) = self.h.shape();
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let theta: Vec<_> = (0..m)
            .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        let slack: Vec<_> = (0..p).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
        for i in 0..p {
            let row = || theta.iter().enumerate().map(move |(j, &v)| (v, self.h[(i, j)]));
            lp.add_constraint(row().chain([(slack[i], -1.0)]), ComparisonOp::Le, y[i]);
            lp.add_constraint(row().chain([(slack[i], 1.0)]), ComparisonOp::Ge, y[i]);
        }
        let outcome = lp.solve().map_err(|e| CentralError::Solver(e.to_string()))?;
        let solution = outcome
            .solution()
            .ok_or_else(|| CentralError::Solver(format!("interrupted: {:?}", outcome.termination_reason())))?;
        let theta = DVector::from_iterator(m, theta.iter().map(|&v| solution.var_value(v)));
        let attack = y - &self.h * &theta;
        let support = support_of(&attack, y);
        Ok(IdentificationResult { theta, attack, support })
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Least-squares fit of `θ_0` to `y_t = H Aᵗ θ_0`, returning the fit and
/// the residual norm of the stacked sequence.
pub fn dynamic_fit(
    a_dyn: &DMatrix<f64>,
    h: &DMatrix<f64>,
    ys: &[DVector<f64>],
) -> Result<(DVector<f64>, f64), CentralError> {
    if ys.is_empty() {
        return Err(CentralError::EmptySequence);
    }
    let (p, m) = h.shape();
    if let Some(bad) = ys.iter().find(|y| y.len() != p) {
        return Err(CentralError::Length {
            got: bad.len(),
            expected: p,
        });
    }
    let t = ys.len();
    let mut obs = DMatrix::zeros(p * t, m);
    let mut power = DMatrix::identity(m, m);
    for k in 0..t {
        obs.view_mut((k * p, 0), (p, m)).copy_from(&(h * &power));
        power = a_dyn * power;
    }
    full_rank(&obs)?;
    let stacked = DVector::from_iterator(p * t, ys.iter().flat_map(|y| y.iter().copied()));
    let theta0 = least_squares(&obs, &stacked);
    let residual = (stacked - obs * &theta0).norm();
    Ok((theta0, residual))
}

/// Alarm when the stacked residual of [`dynamic_fit`] exceeds `tau_detect`.
pub fn dynamic_residual_detect(
    a_dyn: &DMatrix<f64>,
    model: &CentralModel,
    ys: &[DVector<f64>],
    tau_detect: f64,
) -> Result<bool, CentralError> {
    Ok(dynamic_fit(a_dyn, model.h(), ys)?.1 > tau_detect)
}

/// Residual threshold hit with probability `false_alarm` under
/// `w ~ N(0, noise_std² I)`, estimated from `trials` draws.
pub fn calibrate_tau(
    h: &DMatrix<f64>,
    noise_std: f64,
    false_alarm: f64,
    trials: usize,
    seed: u64,
) -> Result<f64, CentralError> {
    full_rank(h)?;
    let model = CentralModel {
        h: h.clone(),
        tau_detect: 1.0,
    };
    let mut rng = stream(seed, StreamTag::Experiment, 0, 0);
    let mut residuals: Vec<f64> = (0..trials.max(1))
        .map(|_| {
            let w = DVector::from_fn(h.nrows(), |_, _| noise_std * rng.sample::<f64, _>(StandardNormal));
            model.residual(&w)
        })
        .collect::<Result<_, _>>()?;
    residuals.sort_by(f64::total_cmp);
    let idx = (((1.0 - false_alarm) * residuals.len() as f64).ceil() as usize).clamp(1, residuals.len()) - 1;
    Ok(residuals[idx])
}

/// `true` (H₁) iff at least `k_star` sensors vote H₁.
pub fn counting_fusion(votes: &[bool], k_star: usize) -> bool {
    votes.iter().filter(|&&v| v).count() >= k_star
}

/// How compromised sensors vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByzantineVoting {
    /// Always the hypothesis that is not true.
    AlwaysWrong,
    /// The opposite of their own local decision.
    FlipLocal,
    /// Like an honest sensor.
    Honest,
}

/// Binary hypothesis test with `n_sensors` local detectors of equal
/// accuracy, a fraction of which are byzantine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionProblem {
    pub n_sensors: usize,
    pub p0: f64,
    pub p1: f64,
    /// Probability that an honest sensor decides correctly.
    pub accuracy: f64,
    pub byzantine_fraction: f64,
}

impl FusionProblem {
    pub fn new(n_sensors: usize, p0: f64, accuracy: f64, byzantine_fraction: f64) -> Result<Self, CentralError> {
        let p = Self {
            n_sensors,
            p0,
            p1: 1.0 - p0,
            accuracy,
            byzantine_fraction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CentralError> {
        let bad = |msg: &str| Err(CentralError::Fusion(msg.to_string()));
        if self.n_sensors == 0 {
            return bad("no sensors");
        }
        if !(0.0..=1.0).contains(&self.p0) || !(0.0..=1.0).contains(&self.p1) || (self.p0 + self.p1 - 1.0).abs() > 1e-12
        {
            return bad("priors must be probabilities summing to 1");
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return bad("accuracy must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.byzantine_fraction) {
            return bad("byzantine_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// `⌊α_b N⌋`.
    pub fn byzantine_count(&self) -> usize {
        ((self.byzantine_fraction * self.n_sensors as f64) + 1e-9).floor() as usize
    }

    /// Probability that a single sensor votes H₁ under `h1`.
    fn vote_probability(&self, h1: bool, byzantine: Option<ByzantineVoting>) -> f64 {
        let honest = if h1 { self.accuracy } else { 1.0 - self.accuracy };
        match byzantine {
            None | Some(ByzantineVoting::Honest) => honest,
            Some(ByzantineVoting::FlipLocal) => 1.0 - honest,
            Some(ByzantineVoting::AlwaysWrong) => {
                if h1 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Distribution of the number of H₁ votes under `h1`.
    pub fn vote_distribution(&self, h1: bool, strategy: ByzantineVoting) -> Vec<f64> {
        let b = self.byzantine_count();
        let ph = self.vote_probability(h1, None);
        let pb = self.vote_probability(h1, Some(strategy));
        let mut pmf = vec![1.0];
        for i in 0..self.n_sensors {
            let q = if i < self.n_sensors - b { ph } else { pb };
            let mut next = vec![0.0; pmf.len() + 1];
            for (c, &w) in pmf.iter().enumerate() {
                next[c] += w * (1.0 - q);
                next[c + 1] += w * q;
            }
            pmf = next;
        }
        pmf
    }

    /// Exact Bayes error of [`counting_fusion`] with threshold `k`.
    pub fn bayes_error(&self, k: usize, strategy: ByzantineVoting) -> f64 {
        let miss: f64 = self.vote_distribution(true, strategy).iter().take(k).sum();
        let false_alarm: f64 = self.vote_distribution(false, strategy).iter().skip(k).sum();
        self.p1 * miss + self.p0 * false_alarm
    }

    /// Bayes error under the worst deterministic attacker, which for a
    /// counting rule is [`ByzantineVoting::AlwaysWrong`].
    pub fn worst_case_error(&self, k: usize) -> f64 {
        self.bayes_error(k, ByzantineVoting::AlwaysWrong)
    }

    /// Monte-Carlo estimate of the Bayes error of threshold `k`. The draws
    /// do not depend on `k`, so thresholds compared under one seed see the
    /// same trials.
    pub fn simulate_error(&self, k: usize, strategy: ByzantineVoting, trials: usize, seed: u64) -> f64 {
        let b = self.byzantine_count();
        let mut rng = stream(seed, StreamTag::Experiment, 0, strategy as u64);
        let mut errors = 0usize;
        let mut votes = vec![false; self.n_sensors];
        for _ in 0..trials {
            let h1 = rng.random::<f64>() < self.p1;
            for (i, v) in votes.iter_mut().enumerate() {
                let local = if rng.random::<f64>() < self.accuracy { h1 } else { !h1 };
                *v = if i < self.n_sensors - b {
                    local
                } else {
                    match strategy {
                        ByzantineVoting::AlwaysWrong => !h1,
                        ByzantineVoting::FlipLocal => !local,
                        ByzantineVoting::Honest => local,
                    }
                };
            }
            if counting_fusion(&votes, k) != h1 {
                errors += 1;
            }
        }
        errors as f64 / trials.max(1) as f64
    }
}

/// Threshold in `1..=N` minimizing the worst-case Bayes error; ties go to
/// the smallest `k`.
pub fn choose_k_star(problem: &FusionProblem) -> usize {
    (1..=problem.n_sensors)
        .map(|k| (k, problem.worst_case_error(k)))
        .fold(
            (1, f64::INFINITY),
            |best, (k, e)| if e < best.1 - 1e-15 { (k, e) } else { best },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn random_h(rng: &mut ChaCha8Rng, p: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(p, m, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    /// `I - H (HᵀH)⁻¹ Hᵀ`, via the normal equations.
    fn orthogonal_projector(h: &DMatrix<f64>) -> DMatrix<f64> {
        let gram_inv = (h.transpose() * h).try_inverse().unwrap();
        DMatrix::identity(h.nrows(), h.nrows()) - h * gram_inv * h.transpose()
    }

    #[test]
    fn ls_examples() {
        let m = CentralModel::new(DMatrix::from_element(2, 1, 1.0), 1.0).unwrap();
        assert_relative_eq!(m.ls_estimate(&col(&[4.0, 6.0])).unwrap()[0], 5.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_h(&mut rng, 10, 3);
        let theta = col(&[1.0, -2.0, 0.5]);
        let model = CentralModel::new(h.clone(), 1.0).unwrap();
        assert_relative_eq!(model.ls_estimate(&(&h * &theta)).unwrap(), theta, epsilon = 1e-10);

        let raw = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = orthogonal_projector(&h) * raw;
        assert!((h.transpose() * &a).amax() < 1e-10);
        assert_relative_eq!(model.ls_estimate(&(&h * &theta + a)).unwrap(), theta, epsilon = 1e-10);

        let singular = CentralModel::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]), 1.0).unwrap();
        assert!(matches!(
            singular.ls_estimate(&col(&[1.0, 2.0, 3.0])),
            Err(CentralError::RankDeficient { rank: 1, .. })
        ));
        assert!(matches!(
            CentralModel::new(h, f64::NAN),
            Err(CentralError::Threshold(_))
        ));
    }

    #[test]
    fn residual_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_h(&mut rng, 6, 2);
        let model = CentralModel::new(h.clone(), 0.5).unwrap();
        let y = &h * col(&[3.0, 1.0]);
        assert!(!model.residual_detect(&y).unwrap());

        let c = col(&[10.0, -4.0]);
        let a = model.stealthy_attack(&c);
        assert!(!model.residual_detect(&(&y + &a)).unwrap());
        let shift = model.ls_estimate(&(&y + &a)).unwrap() - model.ls_estimate(&y).unwrap();
        assert_relative_eq!(shift, c, epsilon = 1e-9);
        assert_eq!(model.stealthy_attack(&col(&[0.0, 0.0])), DVector::zeros(6));

        let raw = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut a = orthogonal_projector(&h) * raw;
        a *= 2.0 * model.tau_detect() / a.norm();
        assert_relative_eq!(model.residual(&(&y + &a)).unwrap(), 1.0, epsilon = 1e-9);
        assert!(model.residual_detect(&(&y + &a)).unwrap());
    }

    #[test]
    fn l0_examples() {
        let model = CentralModel::new(DMatrix::from_element(3, 1, 1.0), 1.0).unwrap();
        let y = col(&[5.0, 5.0, 9.0]);
        let r = model.identify_l0(&y, 1, L0_EPS).unwrap();
        assert_relative_eq!(r.theta[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(r.attack, col(&[0.0, 0.0, 4.0]), epsilon = 1e-12);
        assert_eq!(r.support, vec![2]);

        let clean = model.identify_l0(&col(&[2.0, 2.0, 2.0]), 1, L0_EPS).unwrap();
        assert!(clean.support.is_empty());
        assert_relative_eq!(clean.theta[0], 2.0, epsilon = 1e-12);

        assert_eq!(
            model.identify_l0(&col(&[1.0, 2.0, 3.0]), 1, L0_EPS),
            Err(CentralError::NoConsistent { s_max: 1 })
        );

        let wide = CentralModel::new(DMatrix::from_element(40, 1, 1.0), 1.0).unwrap();
        assert!(matches!(
            wide.identify_l0(&DVector::zeros(40), 20, L0_EPS),
            Err(CentralError::Budget { .. })
        ));
    }

    #[test]
    fn l0_recovers_single_row_attacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let h = random_h(&mut rng, 6, 2);
            // generic Gaussian H stays observable after removing any 2 rows
            for removed in (0..6).combinations(2) {
                let kept: Vec<usize> = (0..6).filter(|i| !removed.contains(i)).collect();
                assert_eq!(numerical_rank(&h.select_rows(&kept)), 2);
            }
            let model = CentralModel::new(h.clone(), 1.0).unwrap();
            let theta = col(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
            let row = rng.random_range(0..6);
            let mut a = DVector::zeros(6);
            a[row] = rng.random_range(1.0..10.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let r = model.identify_l0(&(&h * &theta + &a), 1, L0_EPS).unwrap();
            assert_eq!(r.support, vec![row]);
            assert_relative_eq!(r.theta, theta, epsilon = 1e-8);
        }
    }

    #[test]
    fn l1_examples() {
        let model = CentralModel::new(DMatrix::from_element(3, 1, 1.0), 1.0).unwrap();
        let r = model.identify_l1(&col(&[5.0, 5.0, 9.0])).unwrap();
        let l0 = model.identify_l0(&col(&[5.0, 5.0, 9.0]), 1, L0_EPS).unwrap();
        assert_relative_eq!(r.theta[0], 5.0, epsilon = 1e-9);
        assert_eq!(r.support, l0.support);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_h(&mut rng, 7, 3);
        let model = CentralModel::new(h.clone(), 1.0).unwrap();
        let r = model.identify_l1(&(&h * col(&[1.0, 2.0, 3.0]))).unwrap();
        assert!(r.attack.amax() < 1e-8, "{}", r.attack.amax());
    }

    #[test]
    fn dynamic_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_h(&mut rng, 2, 2);
        let model = CentralModel::new(h.clone(), 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.95]);
        let mut x = col(&[2.0, -1.0]);
        let mut ys = Vec::new();
        for _ in 0..8 {
            ys.push(&h * &x);
            x = &a * x;
        }
        let (theta0, res) = dynamic_fit(&a, &h, &ys).unwrap();
        assert_relative_eq!(theta0, col(&[2.0, -1.0]), epsilon = 1e-9);
        assert!(res < 1e-9);
        assert!(!dynamic_residual_detect(&a, &model, &ys, 1.0).unwrap());

        // off-model jump halfway through
        let tau = 1.0;
        let mut jumped = ys.clone();
        let jump = col(&[1.0, -1.0]);
        for y in jumped.iter_mut().skip(4) {
            *y += &jump;
        }
        // oracle: residual is the projection of the jump sequence off the
        // observability subspace, scaled to 3τ
        let (_, r) = dynamic_fit(&a, &h, &jumped).unwrap();
        let scale = 3.0 * tau / r;
        for y in jumped.iter_mut().skip(4) {
            *y += &jump * (scale - 1.0);
        }
        let (_, r) = dynamic_fit(&a, &h, &jumped).unwrap();
        assert_relative_eq!(r, 3.0 * tau, epsilon = 1e-9);
        assert!(dynamic_residual_detect(&a, &model, &jumped, tau).unwrap());

        // A = I: the fit equals the static estimate on averaged data
        let eye = DMatrix::identity(2, 2);
        let noisy: Vec<DVector<f64>> = (0..5)
            .map(|k| &h * col(&[1.0, 1.0]) + col(&[0.1 * k as f64, -0.05]))
            .collect();
        let (theta0, _) = dynamic_fit(&eye, &h, &noisy).unwrap();
        let mean = noisy.iter().fold(DVector::zeros(2), |acc, y| acc + y) / 5.0;
        assert_relative_eq!(theta0, model.ls_estimate(&mean).unwrap(), epsilon = 1e-10);

        let blind = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            dynamic_fit(&eye, &blind, &[col(&[1.0])]),
            Err(CentralError::RankDeficient { .. })
        ));
    }

    #[test]
    fn tau_calibration_matches_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_h(&mut rng, 8, 3);
        let tau = calibrate_tau(&h, 2.0, 0.05, 20_000, 1).unwrap();
        let exact = 2.0 * ChiSquared::new(5.0).unwrap().inverse_cdf(0.95).sqrt();
        assert!((tau - exact).abs() / exact < 0.02, "{tau} vs {exact}");
    }

    #[test]
    fn fusion_examples() {
        assert!(counting_fusion(&[true, true, true], 2));
        assert!(!counting_fusion(&[false; 3], 1));
        assert!(!counting_fusion(&[true, false, true, false], 3));

        for n in [5usize, 11, 25] {
            let p = FusionProblem::new(n, 0.5, 0.9, 0.0).unwrap();
            assert_eq!(choose_k_star(&p), n.div_ceil(2));
        }
        let perfect = FusionProblem::new(7, 0.3, 1.0, 0.0).unwrap();
        assert_eq!(choose_k_star(&perfect), 1);
        assert_eq!(perfect.worst_case_error(1), 0.0);

        let p = FusionProblem::new(25, 0.5, 0.9, 0.2).unwrap();
        assert_eq!(p.byzantine_count(), 5);
        // symmetric priors: the attack is symmetric too, so majority is optimal
        assert_eq!(choose_k_star(&p), 13);
        let skewed = FusionProblem::new(25, 0.9, 0.9, 0.2).unwrap();
        let k = choose_k_star(&skewed);
        assert!(skewed.worst_case_error(k) < skewed.worst_case_error(13), "k* = {k}");

        assert!(FusionProblem::new(5, 1.2, 0.9, 0.0).is_err());
        assert!(FusionProblem::new(5, 0.5, 0.9, 1.0).is_err());
    }

    #[test]
    fn vote_distribution_matches_binomial_formula() {
        let p = FusionProblem::new(9, 0.5, 0.8, 0.0).unwrap();
        let pmf = p.vote_distribution(true, ByzantineVoting::AlwaysWrong);
        for (c, &v) in pmf.iter().enumerate() {
            let exact = binomial(9, c as u64) as f64 * 0.8f64.powi(c as i32) * 0.2f64.powi(9 - c as i32);
            assert_relative_eq!(v, exact, epsilon = 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn stealthy_attack_leaves_detector_unchanged(seed in any::<u64>(), p in 3usize..10, m in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_h(&mut rng, p, m);
            let model = CentralModel::new(h, rng.random_range(0.1..3.0)).unwrap();
            let y = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
            let c = DVector::from_fn(m, |_, _| rng.random_range(-50.0..50.0));
            let attacked = &y + model.stealthy_attack(&c);
            let (r0, r1) = (model.residual(&y).unwrap(), model.residual(&attacked).unwrap());
            prop_assert!((r0 - r1).abs() <= 1e-10 * (1.0 + y.norm() + attacked.norm()));
            prop_assert_eq!(model.residual_detect(&y).unwrap(), model.residual_detect(&attacked).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn l1_objective_never_exceeds_l0(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_h(&mut rng, 8, 2);
            let model = CentralModel::new(h.clone(), 1.0).unwrap();
            let mut y = &h * DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            y[rng.random_range(0..8)] += rng.random_range(1.0..20.0);
            let l0 = model.identify_l0(&y, 1, L0_EPS).unwrap();
            let l1 = model.identify_l1(&y).unwrap();
            prop_assert!(l1.attack.lp_norm(1) <= l0.attack.lp_norm(1) + 1e-7);
        }

        #[test]
        fn adding_an_h1_vote_never_flips_to_h0(votes in proptest::collection::vec(any::<bool>(), 1..30), k in 1usize..30) {
            if let Some(i) = votes.iter().position(|v| !v) {
                let mut more = votes.clone();
                more[i] = true;
                prop_assert!(!counting_fusion(&votes, k) || counting_fusion(&more, k));
            }
        }

        #[test]
        fn always_wrong_is_the_worst_attacker(n in 1usize..40, acc in 0.5f64..1.0, frac in 0.0f64..0.99, p0 in 0.05f64..0.95, k in 1usize..40) {
            let p = FusionProblem::new(n, p0, acc, frac).unwrap();
            let k = k.min(n);
            let worst = p.worst_case_error(k);
            prop_assert!(worst + 1e-12 >= p.bayes_error(k, ByzantineVoting::FlipLocal));
            prop_assert!(worst + 1e-12 >= p.bayes_error(k, ByzantineVoting::Honest));
        }

        #[test]
        fn half_compromised_makes_counting_useless(half in 1usize..15, extra in 0usize..5, acc in 0.5f64..1.0, flip in any::<bool>()) {
            let n = 2 * half + extra;
            let frac = (half + extra) as f64 / n as f64;
            prop_assume!(frac < 1.0);
            let p = FusionProblem::new(n, 0.5, acc, frac).unwrap();
            let strategy = if flip { ByzantineVoting::FlipLocal } else { ByzantineVoting::AlwaysWrong };
            let best = (1..=n).map(|k| p.bayes_error(k, strategy)).fold(f64::INFINITY, f64::min);
            prop_assert!(best >= 0.5 - 1e-12, "best error {best}");
        }
    }

    #[test]
    fn half_compromised_monte_carlo() {
        let p = FusionProblem::new(20, 0.5, 0.9, 0.5).unwrap();
        for k in [1, 5, 10, 11, 15, 20] {
            let e = p.simulate_error(k, ByzantineVoting::FlipLocal, 20_000, 2);
            assert!((e - 0.5).abs() < 0.015, "k = {k}: {e}");
        }
    }
}
