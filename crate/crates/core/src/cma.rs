//! (μ/μ_w, λ)-CMA-ES with an ask/tell interface.
//!
//! Cumulative step-size adaptation, rank-one plus rank-μ covariance update,
//! log-decreasing recombination weights, and the standard learning rates.
//! The sampling covariance is kept split as Σ = σ²·C: `sigma` is the global
//! step size and `shape` is the matrix C, updated separately.
//!
//! A [`SearchDistribution`] is a strictly sequential state machine owned by
//! one optimization run; independent runs with independent RNG streams may
//! execute concurrently.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmaError {
    #[error("shape matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tell expects {expected} candidates from the preceding ask, got {got}")]
    CandidateCountMismatch { expected: usize, got: usize },
    #[error("tell called without a matching ask")]
    TellWithoutAsk,
    #[error("non-finite fitness {value} for candidate {index}")]
    NonFiniteFitness { index: usize, value: f64 },
    #[error("step size must be positive and finite, got {0}")]
    BadStepSize(f64),
    #[error("population size must be at least 2, got {0}")]
    BadLambda(usize),
}

/// Default population size ⌊4 + 3·ln(n)⌋.
pub fn default_lambda(n: usize) -> usize {
    assert!(n >= 1, "dimension must be at least 1");
    (4.0 + 3.0 * (n as f64).ln()).floor() as usize
}

/// Final state of a run as decided by [`SearchDistribution::check_termination`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Outcome {
    Running,
    Success,
    FailSigma,
    FailCondition,
    FailBudget,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::FailSigma => "fail_sigma",
            Outcome::FailCondition => "fail_condition",
            Outcome::FailBudget => "fail_budget",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(Outcome::Running),
            "success" => Ok(Outcome::Success),
            "fail_sigma" => Ok(Outcome::FailSigma),
            "fail_condition" => Ok(Outcome::FailCondition),
            "fail_budget" => Ok(Outcome::FailBudget),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TerminationStatus {
    pub outcome: Outcome,
    pub detail: String,
}

impl TerminationStatus {
    pub fn running() -> Self {
        TerminationStatus {
            outcome: Outcome::Running,
            detail: String::new(),
        }
    }
}

/// Run-level termination thresholds.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// Success when the best observed gap |F(m) - F(x*)| falls below this.
    pub gap: f64,
    /// Failure when the step size falls below this.
    pub sigma_min: f64,
    /// Failure when cond(C) (equivalently cond(Σ), σ² cancels) exceeds this.
    pub cond_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gap: 1e-12,
            sigma_min: 1e-12,
            cond_max: 1e14,
        }
    }
}

/// Restart flavor: `Simple` keeps λ, `DoubleLambda` doubles it on every restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartKind {
    Simple,
    DoubleLambda,
}

/// Strategy parameters derived from (n, λ).
#[derive(Debug, Clone)]
struct StrategyParams {
    mu: usize,
    weights: DVector<f64>, // length λ, first μ positive summing to 1, rest zero
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_one: f64,
    c_mu: f64,
    chi_n: f64, // E‖N(0, I_n)‖
}

impl StrategyParams {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let mut weights = DVector::zeros(lambda);
        let ln_half = ((lambda as f64 + 1.0) / 2.0).ln();
        for i in 0..mu {
            weights[i] = ln_half - ((i + 1) as f64).ln();
        }
        let sum: f64 = weights.iter().take(mu).sum();
        for i in 0..mu {
            weights[i] /= sum;
        }
        let mu_eff = 1.0 / weights.iter().take(mu).map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_one = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff))
            .min(1.0 - c_one);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        StrategyParams {
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_one,
            c_mu,
            chi_n,
        }
    }
}

/// Eigendecomposition cache of the current shape matrix C.
#[derive(Debug, Clone)]
struct ShapeFactors {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    chol: Option<DMatrix<f64>>, // lower-triangular L with C = L·Lᵀ
}

impl ShapeFactors {
    fn compute(shape: &DMatrix<f64>) -> Self {
        let eig = shape.clone().symmetric_eigen();
        let chol = shape.clone().cholesky().map(|c| c.unpack());
        ShapeFactors {
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues,
            chol,
        }
    }

    fn condition_number(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.eigvals.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// C^{-1/2} applied to a vector, eigenvalues clamped away from zero.
    fn inv_sqrt_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = self.eigvecs.transpose() * v;
        for (i, x) in w.iter_mut().enumerate() {
            *x /= self.eigvals[i].max(1e-30).sqrt();
        }
        &self.eigvecs * w
    }
}

/// CMA-ES search distribution state: N(mean, σ²·C) plus evolution paths.
#[derive(Debug, Clone)]
pub struct SearchDistribution {
    mean: DVector<f64>,
    sigma: f64,
    shape: DMatrix<f64>,
    path_sigma: DVector<f64>,
    path_cov: DVector<f64>,
    lambda: usize,
    iteration: u64,
    params: StrategyParams,
    factors: ShapeFactors,
    init_sigma: f64,
    init_shape: DMatrix<f64>,
    awaiting_tell: bool,
}

impl SearchDistribution {
    /// Builds a fresh state with zeroed evolution paths.
    ///
    /// `lambda` defaults to [`default_lambda`]. `shape0` must be symmetric
    /// positive definite.
    pub fn new(
        mean0: &[f64],
        sigma0: f64,
        shape0: DMatrix<f64>,
        lambda: Option<usize>,
    ) -> Result<Self, CmaError> {
        let n = mean0.len();
        assert!(n >= 1, "dimension must be at least 1");
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(CmaError::BadStepSize(sigma0));
        }
        if shape0.nrows() != n || shape0.ncols() != n {
            return Err(CmaError::DimensionMismatch {
                expected: n,
                got: shape0.nrows(),
            });
        }
        let lambda = lambda.unwrap_or_else(|| default_lambda(n));
        if lambda < 2 {
            return Err(CmaError::BadLambda(lambda));
        }
        let factors = ShapeFactors::compute(&shape0);
        if factors.chol.is_none() {
            return Err(CmaError::NotPositiveDefinite);
        }
        Ok(SearchDistribution {
            mean: DVector::from_column_slice(mean0),
            sigma: sigma0,
            init_sigma: sigma0,
            init_shape: shape0.clone(),
            shape: shape0,
            path_sigma: DVector::zeros(n),
            path_cov: DVector::zeros(n),
            lambda,
            iteration: 0,
            params: StrategyParams::new(n, lambda),
            factors,
            awaiting_tell: false,
        })
    }

    /// Identity-shape convenience constructor.
    pub fn new_isotropic(mean0: &[f64], sigma0: f64, lambda: Option<usize>) -> Result<Self, CmaError> {
        let n = mean0.len();
        SearchDistribution::new(mean0, sigma0, DMatrix::identity(n, n), lambda)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.params.mu
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn recombination_weights(&self) -> &DVector<f64> {
        &self.params.weights
    }

    pub fn path_sigma(&self) -> &DVector<f64> {
        &self.path_sigma
    }

    pub fn path_cov(&self) -> &DVector<f64> {
        &self.path_cov
    }

    /// cond(C) from the cached eigendecomposition (σ² cancels, so this
    /// equals cond(Σ)). Infinite when C lost positive definiteness.
    pub fn condition_number(&self) -> f64 {
        self.factors.condition_number()
    }

    /// Squared Mahalanobis distance (x - m)ᵀ Σ⁻¹ (x - m) under Σ = σ²·C,
    /// via the cached Cholesky factor of C (no explicit inverse).
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64, CmaError> {
        if x.len() != self.dim() {
            return Err(CmaError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let chol = self.factors.chol.as_ref().ok_or(CmaError::NotPositiveDefinite)?;
        let diff = x - &self.mean;
        let w = chol
            .clone()
            .solve_lower_triangular(&diff)
            .ok_or(CmaError::NotPositiveDefinite)?;
        Ok(w.norm_squared() / (self.sigma * self.sigma))
    }

    /// Samples λ candidates x_k = m + σ·L·z_k with L the Cholesky factor of C.
    pub fn ask<R: Rng>(&mut self, rng: &mut R) -> Result<Vec<DVector<f64>>, CmaError> {
        let n = self.dim();
        let chol = self.factors.chol.as_ref().ok_or(CmaError::NotPositiveDefinite)?;
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            out.push(&self.mean + self.sigma * (chol * z));
        }
        self.awaiting_tell = true;
        Ok(out)
    }

    /// Rank-based distribution update from the candidates of the preceding
    /// ask and their fitness values (minimization).
    pub fn tell(&mut self, candidates: &[DVector<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        if !self.awaiting_tell {
            return Err(CmaError::TellWithoutAsk);
        }
        if candidates.len() != self.lambda || fitness.len() != self.lambda {
            return Err(CmaError::CandidateCountMismatch {
                expected: self.lambda,
                got: candidates.len().min(fitness.len()),
            });
        }
        for (i, &f) in fitness.iter().enumerate() {
            if !f.is_finite() {
                return Err(CmaError::NonFiniteFitness { index: i, value: f });
            }
        }
        let n = self.dim();
        let p = &self.params;

        // Stable ascending sort keeps tie order deterministic, which makes
        // the update invariant under strictly increasing fitness transforms.
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap());

        // Incremental mean update: bit-exact when all candidates coincide
        // with the mean.
        let old_mean = self.mean.clone();
        let mut mean_delta = DVector::zeros(n);
        for (rank, &idx) in order.iter().take(p.mu).enumerate() {
            mean_delta += p.weights[rank] * (&candidates[idx] - &old_mean);
        }
        let new_mean = &old_mean + &mean_delta;
        let mean_step = mean_delta / self.sigma;

        // CSA path uses C^{-1/2} of the shape the candidates were drawn from.
        let norm_step = self.factors.inv_sqrt_mul(&mean_step);
        self.path_sigma = (1.0 - p.c_sigma) * &self.path_sigma
            + (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt() * norm_step;
        let ps_norm = self.path_sigma.norm();

        let decay = 1.0 - (1.0 - p.c_sigma).powi(2 * (self.iteration as i32 + 1));
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n {
            1.0
        } else {
            0.0
        };

        self.path_cov = (1.0 - p.c_c) * &self.path_cov
            + h_sigma * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt() * &mean_step;

        let mut rank_mu = DMatrix::zeros(n, n);
        for (rank, &idx) in order.iter().take(p.mu).enumerate() {
            let y = (&candidates[idx] - &old_mean) / self.sigma;
            rank_mu += p.weights[rank] * &y * y.transpose();
        }

        let delta_h = (1.0 - h_sigma) * p.c_c * (2.0 - p.c_c);
        let base = 1.0 - p.c_one - p.c_mu + p.c_one * delta_h;
        self.shape = base * &self.shape
            + p.c_one * &self.path_cov * self.path_cov.transpose()
            + p.c_mu * rank_mu;
        // Symmetrize against floating-point drift.
        self.shape = (&self.shape + self.shape.transpose()) * 0.5;

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(CmaError::BadStepSize(self.sigma));
        }

        self.mean = new_mean;
        self.iteration += 1;
        self.factors = ShapeFactors::compute(&self.shape);
        self.awaiting_tell = false;
        Ok(())
    }

    /// Success / budget / sigma / condition-number check, in that order.
    ///
    /// `best_gap` is the best observed |F(m) - F(x*)|; pass infinity when
    /// no reference optimum is known (success then never fires).
    pub fn check_termination(
        &self,
        best_gap: f64,
        fcalls_used: u64,
        budget: u64,
        thresholds: &Thresholds,
    ) -> TerminationStatus {
        if best_gap < thresholds.gap {
            return TerminationStatus {
                outcome: Outcome::Success,
                detail: format!("gap {best_gap:.3e} below {:.3e}", thresholds.gap),
            };
        }
        if fcalls_used >= budget {
            return TerminationStatus {
                outcome: Outcome::FailBudget,
                detail: format!("budget exhausted ({fcalls_used} of {budget} f-calls)"),
            };
        }
        if self.sigma < thresholds.sigma_min {
            return TerminationStatus {
                outcome: Outcome::FailSigma,
                detail: format!("sigma {:.3e} below {:.3e}", self.sigma, thresholds.sigma_min),
            };
        }
        let cond = self.condition_number();
        if cond > thresholds.cond_max {
            return TerminationStatus {
                outcome: Outcome::FailCondition,
                detail: format!("cond(C) {:.3e} above {:.3e}", cond, thresholds.cond_max),
            };
        }
        TerminationStatus::running()
    }

    /// True when max_i Σ_ii = σ²·max_i C_ii falls below `threshold`.
    pub fn coordinate_std_termination(&self, threshold: f64) -> bool {
        let max_diag = self
            .shape
            .diagonal()
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        self.sigma * self.sigma * max_diag < threshold
    }

    /// Re-initializes for a restart: mean resampled uniformly over `init_box`,
    /// σ and C reset to their initial values, paths zeroed, λ doubled iff
    /// `DoubleLambda`.
    pub fn restart<R: Rng>(&mut self, kind: RestartKind, init_box: &[(f64, f64)], rng: &mut R) {
        let n = self.dim();
        assert_eq!(init_box.len(), n, "init box must match dimension");
        let mean = DVector::from_iterator(
            n,
            init_box.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)),
        );
        self.mean = mean;
        self.sigma = self.init_sigma;
        self.shape = self.init_shape.clone();
        self.path_sigma = DVector::zeros(n);
        self.path_cov = DVector::zeros(n);
        self.iteration = 0;
        if kind == RestartKind::DoubleLambda {
            self.lambda *= 2;
        }
        self.params = StrategyParams::new(n, self.lambda);
        self.factors = ShapeFactors::compute(&self.shape);
        self.awaiting_tell = false;
    }
}
