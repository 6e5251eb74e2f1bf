//! Per-candidate dual control laws, their posterior-weighted blend, and the
//! full-knowledge optimal control used as a benchmark.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::grid::Disturbance;
use crate::rbf::{RbfError, RbfNetwork};

/// Denominators with magnitude below this are treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("dual-control coefficient must lie in (0, 1), got {0}")]
    Lambda(f64),
    #[error("input clamp must be positive, got {0}")]
    Clamp(f64),
    #[error("singular control law{} (denominator {denominator:e})", candidate.map(|c| format!(" for candidate {}", c + 1)).unwrap_or_default())]
    Singular {
        candidate: Option<usize>,
        denominator: f64,
    },
    #[error("{got} posteriors for {expected} candidate inputs")]
    Length { expected: usize, got: usize },
    #[error("network evaluation failed: {0}")]
    Network(String),
}

impl From<RbfError> for ControlError {
    fn from(e: RbfError) -> Self {
        ControlError::Network(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    lambda: f64,
    input_clamp: Option<f64>,
}

impl ControllerConfig {
    pub fn new(lambda: f64, input_clamp: Option<f64>) -> Result<Self, ControlError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ControlError::Lambda(lambda));
        }
        if let Some(c) = input_clamp {
            if !(c > 0.0) {
                return Err(ControlError::Clamp(c));
            }
        }
        Ok(Self {
            lambda,
            input_clamp,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn input_clamp(&self) -> Option<f64> {
        self.input_clamp
    }
}

/// Blended input together with the per-candidate inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// `Σ_t π_t·u_t` before clamping.
    pub u: f64,
    /// The value actually applied (equal to `u` unless clamped).
    pub applied: f64,
    pub clamped: bool,
    pub candidate_inputs: Vec<f64>,
    pub posteriors_used: Vec<f64>,
}

/// The candidate law evaluated from precomputed network outputs
/// `F = ŵ_fᵀh_f(x)` and `G = ŵ_gᵀh_g(x)`:
///
/// ```text
///       [y_r − θ₁F − θ₃]·θ₂G − (1−λ)(F·P_αβ + P_γβ)·G
/// u_t = ─────────────────────────────────────────────
///              (1−λ)·G·P_β + (θ₂G)²
/// ```
pub fn candidate_control_from_outputs(
    theta: &Disturbance,
    f_hat: f64,
    g_hat: f64,
    y_r_next: f64,
    p: &Matrix3<f64>,
    cfg: &ControllerConfig,
) -> Result<f64, ControlError> {
    let caution = 1.0 - cfg.lambda;
    let (p_beta, p_alpha_beta, p_gamma_beta) = (p[(1, 1)], p[(0, 1)], p[(2, 1)]);
    let gain = theta.beta * g_hat;
    let denominator = caution * g_hat * p_beta + gain * gain;
    if !(denominator.abs() >= SINGULAR_TOL) {
        return Err(ControlError::Singular {
            candidate: None,
            denominator,
        });
    }
    let numerator = (y_r_next - theta.alpha * f_hat - theta.gamma) * gain
        - caution * (f_hat * p_alpha_beta + p_gamma_beta) * g_hat;
    Ok(numerator / denominator)
}

/// Candidate law for `theta` at state `x`.
pub fn candidate_control(
    theta: &Disturbance,
    net: &RbfNetwork,
    x: &[f64],
    y_r_next: f64,
    p: &Matrix3<f64>,
    cfg: &ControllerConfig,
) -> Result<f64, ControlError> {
    let (f_hat, g_hat) = net.eval(x)?;
    candidate_control_from_outputs(theta, f_hat, g_hat, y_r_next, p, cfg)
}

/// Evaluate every candidate's law, tagging singular ones with their index.
pub fn candidate_controls<'a>(
    thetas: impl IntoIterator<Item = &'a Disturbance>,
    covariances: &[Matrix3<f64>],
    f_hat: f64,
    g_hat: f64,
    y_r_next: f64,
    cfg: &ControllerConfig,
) -> Result<Vec<f64>, ControlError> {
    thetas
        .into_iter()
        .zip(covariances)
        .enumerate()
        .map(|(t, (theta, p))| {
            candidate_control_from_outputs(theta, f_hat, g_hat, y_r_next, p, cfg).map_err(|e| {
                match e {
                    ControlError::Singular { denominator, .. } => ControlError::Singular {
                        candidate: Some(t),
                        denominator,
                    },
                    other => other,
                }
            })
        })
        .collect()
}

/// `u = Σ_t π_t·u_t`, clamped to `±input_clamp` when configured.
pub fn blended_control(
    posteriors: &[f64],
    candidate_inputs: &[f64],
    input_clamp: Option<f64>,
) -> Result<ControlDecision, ControlError> {
    if posteriors.len() != candidate_inputs.len() {
        return Err(ControlError::Length {
            expected: candidate_inputs.len(),
            got: posteriors.len(),
        });
    }
    let u: f64 = posteriors
        .iter()
        .zip(candidate_inputs)
        .map(|(p, u)| p * u)
        .sum();
    let applied = match input_clamp {
        Some(c) => u.clamp(-c, c),
        None => u,
    };
    Ok(ControlDecision {
        u,
        applied,
        clamped: applied != u,
        candidate_inputs: candidate_inputs.to_vec(),
        posteriors_used: posteriors.to_vec(),
    })
}

/// Input that makes the noiseless plant land exactly on `y_r_next` when the
/// true disturbance and plant functions are known.
pub fn optimal_control(
    true_theta: &Disturbance,
    plant_f: f64,
    plant_g: f64,
    y_r_next: f64,
) -> Result<f64, ControlError> {
    let gain = true_theta.beta * plant_g;
    if !(gain.abs() > SINGULAR_TOL) {
        return Err(ControlError::Singular {
            candidate: None,
            denominator: gain,
        });
    }
    Ok((y_r_next - true_theta.alpha * plant_f - true_theta.gamma) / gain)
}
