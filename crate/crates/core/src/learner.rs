//! Bayesian active learning over the candidate grid.
//!
//! Every candidate `θ_t` keeps a posterior probability `π_t` and its own
//! 3×3 estimation-error covariance `P_t` (rows/cols ordered α, β, γ). Each
//! observation scores candidates by the Gaussian density of their one-step
//! residual with variance `φᵀP_tφ + σ²`, after which `P_t` is rescaled by
//! `log₂(η/π_t + 1)`: shrinking for likely candidates, growing otherwise.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::grid::{CandidateGrid, Disturbance};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("covariance is not symmetric positive semidefinite")]
    NotPsd,
    #[error("variance must be positive, got {0}")]
    Variance(f64),
    #[error("noise variance must be positive and finite, got {0}")]
    NoiseVariance(f64),
    #[error("{got} values supplied for {expected} candidates")]
    Length { expected: usize, got: usize },
    #[error("likelihoods must be finite and nonnegative")]
    BadLikelihood,
    #[error("every weighted likelihood underflowed to zero")]
    Underflow,
    #[error("posterior threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("admissible output error must be positive, got {0}")]
    AdmissibleError(f64),
    #[error("grid must contain at least one candidate")]
    EmptyGrid,
}

/// Posteriors are floored here before multiplication and division so a
/// single underflow cannot permanently remove a candidate.
pub const POSTERIOR_FLOOR: f64 = 1e-300;

/// Densities below this switch the posterior update to the log domain.
pub const LOG_DOMAIN_THRESHOLD: f64 = 1e-290;

/// Elementwise ceiling on `|P_t|`; the rescaling factor of a floored
/// posterior is about 990 per step and would otherwise overflow.
pub const COVARIANCE_CEILING: f64 = 1e100;

const PSD_TOL: f64 = 1e-12;

/// One candidate's one-step-ahead prediction of the newest output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// `φ(k) = (f̂(x), ĝ(x)·u, 1)`.
    pub regressor: Vector3<f64>,
    pub y_hat: f64,
    /// `y − ŷ`.
    pub residual: f64,
    /// `φᵀP_tφ + σ²`.
    pub variance: f64,
}

pub fn is_psd(p: &Matrix3<f64>) -> bool {
    let scale = p.amax().max(1.0);
    let tol = PSD_TOL * scale;
    if !p.iter().all(|v| v.is_finite()) || (p - p.transpose()).amax() > tol {
        return false;
    }
    // all principal minors of a symmetric 3×3 must be nonnegative
    let tol2 = tol * scale;
    let tol3 = tol2 * scale;
    let diag_ok = (0..3).all(|i| p[(i, i)] >= -tol);
    let pair = |i: usize, j: usize| p[(i, i)] * p[(j, j)] - p[(i, j)] * p[(j, i)];
    let pairs_ok = pair(0, 1) >= -tol2 && pair(0, 2) >= -tol2 && pair(1, 2) >= -tol2;
    diag_ok && pairs_ok && p.determinant() >= -tol3
}

/// `φᵀPφ + σ²`.
pub fn prediction_variance(
    regressor: &Vector3<f64>,
    p: &Matrix3<f64>,
    sigma2: f64,
) -> Result<f64, LearnerError> {
    if !is_psd(p) {
        return Err(LearnerError::NotPsd);
    }
    let quad = (regressor.transpose() * p * regressor)[(0, 0)];
    Ok(quad.max(0.0) + sigma2)
}

/// Natural log of the Gaussian density of `residual` with the given variance.
pub fn log_likelihood(residual: f64, variance: f64) -> Result<f64, LearnerError> {
    if !(variance > 0.0) {
        return Err(LearnerError::Variance(variance));
    }
    Ok(
        -0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            - residual * residual / (2.0 * variance),
    )
}

/// Gaussian density `(2πΣ)^{-1/2}·exp(−r²/(2Σ))`.
pub fn likelihood(residual: f64, variance: f64) -> Result<f64, LearnerError> {
    if !(variance > 0.0) {
        return Err(LearnerError::Variance(variance));
    }
    Ok((2.0 * std::f64::consts::PI * variance).sqrt().recip()
        * (-residual * residual / (2.0 * variance)).exp())
}

/// `log₂(η/π + 1)` with `π` floored at [`POSTERIOR_FLOOR`].
pub fn covariance_factor(posterior: f64, eta: f64) -> f64 {
    (eta / posterior.max(POSTERIOR_FLOOR) + 1.0).log2()
}

/// `P' = log₂(η/π + 1)·P`.
pub fn update_covariance(p: &Matrix3<f64>, posterior: f64, eta: f64) -> Matrix3<f64> {
    let factor = covariance_factor(posterior, eta);
    let mut next = p * factor;
    let peak = next.amax();
    if peak > COVARIANCE_CEILING {
        next *= COVARIANCE_CEILING / peak;
    }
    next
}

/// When the locked candidate mispredicts by more than `admissible_error`,
/// the disturbance is assumed to have moved and learning restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetPolicy {
    admissible_error: f64,
    posterior_threshold: f64,
}

impl ResetPolicy {
    pub fn new(admissible_error: f64, posterior_threshold: f64) -> Result<Self, LearnerError> {
        if !(admissible_error > 0.0 && admissible_error.is_finite()) {
            return Err(LearnerError::AdmissibleError(admissible_error));
        }
        if !(posterior_threshold > 0.0 && posterior_threshold < 1.0) {
            return Err(LearnerError::Threshold(posterior_threshold));
        }
        Ok(Self {
            admissible_error,
            posterior_threshold,
        })
    }

    pub fn admissible_error(&self) -> f64 {
        self.admissible_error
    }

    pub fn posterior_threshold(&self) -> f64 {
        self.posterior_threshold
    }
}

/// True iff `|residual_star| > ε` and `max_posterior > φ_lock`.
pub fn detect_change(residual_star: f64, policy: &ResetPolicy, max_posterior: f64) -> bool {
    residual_star.abs() > policy.admissible_error && max_posterior > policy.posterior_threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    posteriors: Vec<f64>,
    covariances: Vec<Matrix3<f64>>,
    initial_covariance: Matrix3<f64>,
    eta: f64,
    noise_variance: f64,
}

impl LearnerState {
    pub fn new(
        grid_size: usize,
        initial_covariance: Matrix3<f64>,
        noise_variance: f64,
    ) -> Result<Self, LearnerError> {
        if grid_size == 0 {
            return Err(LearnerError::EmptyGrid);
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(LearnerError::NoiseVariance(noise_variance));
        }
        if !is_psd(&initial_covariance) {
            return Err(LearnerError::NotPsd);
        }
        let eta = 1.0 / grid_size as f64;
        Ok(Self {
            posteriors: vec![eta; grid_size],
            covariances: vec![initial_covariance; grid_size],
            initial_covariance,
            eta,
            noise_variance,
        })
    }

    pub fn for_grid(
        grid: &CandidateGrid,
        initial_covariance: Matrix3<f64>,
        noise_variance: f64,
    ) -> Result<Self, LearnerError> {
        Self::new(grid.size(), initial_covariance, noise_variance)
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    pub fn posteriors(&self) -> &[f64] {
        &self.posteriors
    }

    pub fn covariances(&self) -> &[Matrix3<f64>] {
        &self.covariances
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Overwrite posteriors, e.g. to seed a test. Must be a probability vector.
    pub fn set_posteriors(&mut self, posteriors: &[f64]) -> Result<(), LearnerError> {
        self.check_len(posteriors.len())?;
        if posteriors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(LearnerError::BadLikelihood);
        }
        self.posteriors.copy_from_slice(posteriors);
        Ok(())
    }

    fn check_len(&self, got: usize) -> Result<(), LearnerError> {
        if got != self.len() {
            return Err(LearnerError::Length {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Index and value of the largest posterior (lowest index on ties).
    pub fn argmax(&self) -> (usize, f64) {
        self.posteriors
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
    }

    /// Predict the newest output `y` from the previous state and input for
    /// every candidate. `f_hat`, `g_hat` are the network outputs at that state.
    pub fn predict(
        &self,
        grid: &CandidateGrid,
        f_hat: f64,
        g_hat: f64,
        u: f64,
        y: f64,
    ) -> Result<Vec<Prediction>, LearnerError> {
        self.check_len(grid.size())?;
        let regressor = Vector3::new(f_hat, g_hat * u, 1.0);
        grid.vectors()
            .iter()
            .zip(&self.covariances)
            .map(|(theta, p)| {
                let y_hat = theta.alpha * f_hat + theta.beta * g_hat * u + theta.gamma;
                Ok(Prediction {
                    regressor,
                    y_hat,
                    residual: y - y_hat,
                    variance: prediction_variance(&regressor, p, self.noise_variance)?,
                })
            })
            .collect()
    }

    /// `π_t ← L_t·π_t / Σ_s L_s·π_s`.
    pub fn update_posteriors(&mut self, likelihoods: &[f64]) -> Result<(), LearnerError> {
        self.check_len(likelihoods.len())?;
        if likelihoods.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(LearnerError::BadLikelihood);
        }
        let weighted: Vec<f64> = self
            .posteriors
            .iter()
            .zip(likelihoods)
            .map(|(p, l)| l * p.max(POSTERIOR_FLOOR))
            .collect();
        let total: f64 = weighted.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(LearnerError::Underflow);
        }
        for (p, w) in self.posteriors.iter_mut().zip(weighted) {
            *p = w / total;
        }
        Ok(())
    }

    /// Same update driven by log-likelihoods; immune to underflow.
    pub fn update_posteriors_log(&mut self, log_likelihoods: &[f64]) -> Result<(), LearnerError> {
        self.check_len(log_likelihoods.len())?;
        if log_likelihoods
            .iter()
            .any(|l| l.is_nan() || *l == f64::INFINITY)
        {
            return Err(LearnerError::BadLikelihood);
        }
        let logs: Vec<f64> = self
            .posteriors
            .iter()
            .zip(log_likelihoods)
            .map(|(p, l)| p.max(POSTERIOR_FLOOR).ln() + l)
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(LearnerError::Underflow);
        }
        let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in self.posteriors.iter_mut().zip(weights) {
            *p = w / total;
        }
        Ok(())
    }

    /// Score `predictions` and fold them into the posteriors, switching to
    /// the log domain when any density is tiny.
    pub fn observe(&mut self, predictions: &[Prediction]) -> Result<(), LearnerError> {
        self.check_len(predictions.len())?;
        let logs = predictions
            .iter()
            .map(|p| log_likelihood(p.residual, p.variance))
            .collect::<Result<Vec<_>, _>>()?;
        if logs.iter().any(|l| *l < LOG_DOMAIN_THRESHOLD.ln()) {
            return self.update_posteriors_log(&logs);
        }
        let densities: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        match self.update_posteriors(&densities) {
            Err(LearnerError::Underflow) => self.update_posteriors_log(&logs),
            other => other,
        }
    }

    /// Rescale every `P_t` by `log₂(η/π_t + 1)`.
    pub fn update_covariances(&mut self) {
        let eta = self.eta;
        for (p, &pi) in self.covariances.iter_mut().zip(&self.posteriors) {
            *p = update_covariance(p, pi, eta);
        }
    }

    /// Uniform posteriors and the initial covariance for every candidate.
    pub fn reset(&mut self) {
        let n = self.len();
        self.posteriors.iter_mut().for_each(|p| *p = 1.0 / n as f64);
        let p0 = self.initial_covariance;
        self.covariances.iter_mut().for_each(|p| *p = p0);
    }

    /// Posterior mean of the disturbance over the grid.
    pub fn posterior_mean(&self, grid: &CandidateGrid) -> Disturbance {
        let mut acc = [0.0; 3];
        for (theta, p) in grid.vectors().iter().zip(&self.posteriors) {
            for (a, v) in acc.iter_mut().zip(theta.as_array()) {
                *a += p * v;
            }
        }
        Disturbance::from(acc)
    }
}
