//! Discretization of bounded disturbance intervals into candidate midpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("interval lower bound {lower} must be below upper bound {upper}")]
    EmptyInterval { lower: f64, upper: f64 },
    #[error("admissible error must be positive and finite, got {0}")]
    BadAdmissibleError(f64),
    #[error("candidate index ({0}, {1}, {2}) outside the grid")]
    IndexOutOfRange(usize, usize, usize),
}

/// A disturbance triple `(α, β, γ)`: multiplicative drift factor,
/// multiplicative input-gain factor, additive offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Disturbance {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

impl From<[f64; 3]> for Disturbance {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// `[lower, upper]` together with the admissible approximation error ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedInterval {
    lower: f64,
    upper: f64,
    admissible_error: f64,
}

impl BoundedInterval {
    pub fn new(lower: f64, upper: f64, admissible_error: f64) -> Result<Self, GridError> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(GridError::EmptyInterval { lower, upper });
        }
        if !(admissible_error.is_finite() && admissible_error > 0.0) {
            return Err(GridError::BadAdmissibleError(admissible_error));
        }
        Ok(Self {
            lower,
            upper,
            admissible_error,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn admissible_error(&self) -> f64 {
        self.admissible_error
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Relative slack used to decide that a ratio such as `0.3 / 0.075` is
/// "exactly" an integer despite binary rounding.
const INTEGER_SNAP: f64 = 1e-9;

/// Largest integer strictly less than `x` (for `x > 0`).
///
/// Ratios within [`INTEGER_SNAP`] of an integer `n` are treated as exactly
/// `n`, so the result is `n - 1` there.
pub fn strict_floor(x: f64) -> i64 {
    let nearest = x.round();
    if (x - nearest).abs() <= INTEGER_SNAP * nearest.abs().max(1.0) {
        nearest as i64 - 1
    } else {
        x.floor() as i64
    }
}

/// Equal-length sub-intervals of a [`BoundedInterval`] and their midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointSet {
    lower: f64,
    upper: f64,
    sub_interval_length: f64,
    midpoints: Vec<f64>,
}

impl MidpointSet {
    pub fn count(&self) -> usize {
        self.midpoints.len()
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn sub_interval_length(&self) -> f64 {
        self.sub_interval_length
    }

    /// Division points `lower = d_0 < d_1 < ... < d_s = upper`.
    pub fn division_points(&self) -> Vec<f64> {
        let s = self.count();
        (0..=s)
            .map(|i| {
                if i == s {
                    self.upper
                } else {
                    self.lower + self.sub_interval_length * i as f64
                }
            })
            .collect()
    }

    /// Index of the midpoint closest to `v`.
    pub fn nearest(&self, v: f64) -> usize {
        let raw = ((v - self.lower) / self.sub_interval_length).floor();
        raw.clamp(0.0, (self.count() - 1) as f64) as usize
    }
}

/// Split `iv` into `s = strict_floor(width / ε) + 1` equal sub-intervals,
/// which guarantees a sub-interval length strictly below ε.
pub fn partition_interval(iv: &BoundedInterval) -> MidpointSet {
    let ratio = iv.width() / iv.admissible_error;
    let count = (strict_floor(ratio) + 1).max(1) as usize;
    let length = iv.width() / count as f64;
    let midpoints = (0..count)
        .map(|i| iv.lower + (i as f64 + 0.5) * length)
        .collect();
    MidpointSet {
        lower: iv.lower,
        upper: iv.upper,
        sub_interval_length: length,
        midpoints,
    }
}

/// The Cartesian product of the three midpoint sets.
///
/// Flat order is α-major, then β, then γ: flat index
/// `t = (i·s_β + j)·s_γ + l` for midpoint indices `(i, j, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    alpha_set: MidpointSet,
    beta_set: MidpointSet,
    gamma_set: MidpointSet,
    vectors: Vec<Disturbance>,
    eta: f64,
}

impl CandidateGrid {
    pub fn build(alpha: MidpointSet, beta: MidpointSet, gamma: MidpointSet) -> Self {
        let mut vectors = Vec::with_capacity(alpha.count() * beta.count() * gamma.count());
        for &a in alpha.midpoints() {
            for &b in beta.midpoints() {
                for &c in gamma.midpoints() {
                    vectors.push(Disturbance::new(a, b, c));
                }
            }
        }
        let eta = 1.0 / vectors.len() as f64;
        Self {
            alpha_set: alpha,
            beta_set: beta,
            gamma_set: gamma,
            vectors,
            eta,
        }
    }

    /// Partition three intervals and build their product in one go.
    pub fn from_intervals(
        alpha: &BoundedInterval,
        beta: &BoundedInterval,
        gamma: &BoundedInterval,
    ) -> Self {
        Self::build(
            partition_interval(alpha),
            partition_interval(beta),
            partition_interval(gamma),
        )
    }

    pub fn size(&self) -> usize {
        self.vectors.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn vectors(&self) -> &[Disturbance] {
        &self.vectors
    }

    pub fn get(&self, t: usize) -> Option<&Disturbance> {
        self.vectors.get(t)
    }

    pub fn alpha_set(&self) -> &MidpointSet {
        &self.alpha_set
    }

    pub fn beta_set(&self) -> &MidpointSet {
        &self.beta_set
    }

    pub fn gamma_set(&self) -> &MidpointSet {
        &self.gamma_set
    }

    pub fn flat_index(&self, i: usize, j: usize, l: usize) -> Result<usize, GridError> {
        let (sb, sg) = (self.beta_set.count(), self.gamma_set.count());
        if i >= self.alpha_set.count() || j >= sb || l >= sg {
            return Err(GridError::IndexOutOfRange(i, j, l));
        }
        Ok((i * sb + j) * sg + l)
    }

    pub fn triple_index(&self, t: usize) -> Option<(usize, usize, usize)> {
        if t >= self.size() {
            return None;
        }
        let (sb, sg) = (self.beta_set.count(), self.gamma_set.count());
        Some((t / (sb * sg), (t / sg) % sb, t % sg))
    }

    /// Flat index of the candidate whose sub-intervals contain `d`
    /// (values outside the bounds snap to the edge sub-interval).
    pub fn nearest(&self, d: &Disturbance) -> usize {
        let i = self.alpha_set.nearest(d.alpha);
        let j = self.beta_set.nearest(d.beta);
        let l = self.gamma_set.nearest(d.gamma);
        (i * self.beta_set.count() + j) * self.gamma_set.count() + l
    }
}
