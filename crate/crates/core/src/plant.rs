//! Simulated ground-truth plants, disturbance schedules, reference
//! trajectories and the seeded measurement-noise stream.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::grid::Disturbance;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("non-finite value in plant step (y={y}, u={u})")]
    NonFinite { y: f64, u: f64 },
    #[error("iteration {k} outside [{first}, {last}]")]
    OutOfRange { k: usize, first: usize, last: usize },
    #[error("{channel}: {msg}")]
    Schedule { channel: &'static str, msg: String },
    #[error("reference: {0}")]
    Reference(String),
    #[error("plant parameter {name} must be positive, got {value}")]
    Param { name: &'static str, value: f64 },
    #[error("noise variance must be nonnegative, got {0}")]
    NoiseVariance(f64),
}

/// An affine plant `y⁺ = α·f(x) + β·g(x)·u + γ + e`.
pub trait AffinePlant: Send + Sync {
    fn drift(&self, x: &[f64]) -> f64;
    fn gain(&self, x: &[f64]) -> f64;
}

/// Resistance and traction parameters of the CRH3 train model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    /// Acceleration coefficient ξ.
    pub xi: f64,
    /// Sampling interval T.
    pub sample_time: f64,
    pub c_r: f64,
    pub c_m: f64,
    pub c_a: f64,
}

impl TrainParams {
    pub const CRH3: TrainParams = TrainParams {
        xi: 0.06,
        sample_time: 0.1,
        c_r: 0.1,
        c_m: 0.0064,
        c_a: 0.000115,
    };

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [
            ("xi", self.xi),
            ("sample_time", self.sample_time),
            ("c_r", self.c_r),
            ("c_m", self.c_m),
            ("c_a", self.c_a),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::Param { name, value });
            }
        }
        Ok(())
    }

    /// General resistance `c_r + c_m·v + c_a·v²`.
    pub fn resistance(&self, v: f64) -> f64 {
        self.c_r + self.c_m * v + self.c_a * v * v
    }
}

#[derive(Clone)]
pub enum PlantKind {
    /// `f(y) = sin y + cos 3y`, `g(y) = 2 + cos y`, state `x = y`.
    AffineCase1,
    /// `f(v) = v − ξT·W(v)`, `g = ξT`, state `x = v`.
    Crh3Train(TrainParams),
    UserDefined(Arc<dyn AffinePlant>),
}

impl fmt::Debug for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantKind::AffineCase1 => write!(f, "AffineCase1"),
            PlantKind::Crh3Train(p) => f.debug_tuple("Crh3Train").field(p).finish(),
            PlantKind::UserDefined(_) => write!(f, "UserDefined(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub kind: PlantKind,
    pub noise_variance: f64,
}

impl PlantModel {
    pub fn new(kind: PlantKind, noise_variance: f64) -> Result<Self, SimError> {
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(SimError::NoiseVariance(noise_variance));
        }
        if let PlantKind::Crh3Train(p) = &kind {
            p.validate()?;
        }
        Ok(Self {
            kind,
            noise_variance,
        })
    }

    /// Ground-truth next output for scalar state `y`.
    pub fn step(&self, y: f64, u: f64, dist: &Disturbance, noise: f64) -> Result<f64, SimError> {
        match &self.kind {
            PlantKind::AffineCase1 => step_affine_case1(y, u, dist, noise),
            PlantKind::Crh3Train(p) => step_train(y, u, dist, noise, p),
            PlantKind::UserDefined(plant) => {
                let x = [y];
                finite(
                    y,
                    u,
                    dist.alpha * plant.drift(&x)
                        + dist.beta * plant.gain(&x) * u
                        + dist.gamma
                        + noise,
                )
            }
        }
    }
}

impl AffinePlant for PlantModel {
    fn drift(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PlantKind::AffineCase1 => x[0].sin() + (3.0 * x[0]).cos(),
            PlantKind::Crh3Train(p) => x[0] - p.xi * p.sample_time * p.resistance(x[0]),
            PlantKind::UserDefined(plant) => plant.drift(x),
        }
    }

    fn gain(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PlantKind::AffineCase1 => 2.0 + x[0].cos(),
            PlantKind::Crh3Train(p) => p.xi * p.sample_time,
            PlantKind::UserDefined(plant) => plant.gain(x),
        }
    }
}

fn finite(y: f64, u: f64, next: f64) -> Result<f64, SimError> {
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::NonFinite { y, u })
    }
}

/// `y⁺ = α[sin y + cos 3y] + β[2 + cos y]·u + γ + e`.
pub fn step_affine_case1(y: f64, u: f64, dist: &Disturbance, noise: f64) -> Result<f64, SimError> {
    let next = dist.alpha * (y.sin() + (3.0 * y).cos())
        + dist.beta * (2.0 + y.cos()) * u
        + dist.gamma
        + noise;
    finite(y, u, next)
}

/// `v⁺ = α{v − ξT[c_r + c_m v + c_a v²]} + β·ξT·force + γ + e`.
pub fn step_train(
    v: f64,
    force: f64,
    dist: &Disturbance,
    noise: f64,
    p: &TrainParams,
) -> Result<f64, SimError> {
    let xt = p.xi * p.sample_time;
    let next =
        dist.alpha * (v - xt * p.resistance(v)) + dist.beta * xt * force + dist.gamma + noise;
    finite(v, force, next)
}

/// A piecewise-constant signal: `(start_k, value)` pairs, the last one
/// extending to the end of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub lower: f64,
    pub upper: f64,
    pub segments: Vec<(usize, f64)>,
}

impl Channel {
    pub fn constant(lower: f64, upper: f64, value: f64) -> Self {
        Self {
            lower,
            upper,
            segments: vec![(1, value)],
        }
    }

    fn validate(&self, name: &'static str, horizon: usize) -> Result<(), SimError> {
        let err = |msg: String| SimError::Schedule { channel: name, msg };
        if !(self.lower <= self.upper) {
            return Err(err(format!(
                "bounds [{}, {}] are inverted",
                self.lower, self.upper
            )));
        }
        match self.segments.first() {
            None => return Err(err("no segments".into())),
            Some(&(start, _)) if start != 1 => {
                return Err(err(format!(
                    "first segment starts at k={start}, must start at k=1"
                )))
            }
            _ => {}
        }
        for w in self.segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(err(format!(
                    "segment starting at k={} overlaps the segment starting at k={}",
                    w[1].0, w[0].0
                )));
            }
        }
        for &(start, value) in &self.segments {
            if start > horizon {
                return Err(err(format!(
                    "segment start k={start} beyond horizon {horizon}"
                )));
            }
            if !(value >= self.lower && value <= self.upper) {
                return Err(err(format!(
                    "value {value} at k={start} outside bounds [{}, {}]",
                    self.lower, self.upper
                )));
            }
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        let idx = self.segments.partition_point(|&(start, _)| start <= k);
        self.segments[idx.saturating_sub(1)].1
    }

    pub fn change_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().skip(1).map(|s| s.0)
    }
}

/// Piecewise-constant `α(k)`, `β(k)`, `γ(k)` over `k ∈ [1, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSchedule {
    alpha: Channel,
    beta: Channel,
    gamma: Channel,
    horizon: usize,
}

impl DisturbanceSchedule {
    pub fn new(
        alpha: Channel,
        beta: Channel,
        gamma: Channel,
        horizon: usize,
    ) -> Result<Self, SimError> {
        if horizon == 0 {
            return Err(SimError::Schedule {
                channel: "schedule",
                msg: "horizon must be at least 1".into(),
            });
        }
        alpha.validate("alpha", horizon)?;
        beta.validate("beta", horizon)?;
        gamma.validate("gamma", horizon)?;
        Ok(Self {
            alpha,
            beta,
            gamma,
            horizon,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alpha(&self) -> &Channel {
        &self.alpha
    }

    pub fn beta(&self) -> &Channel {
        &self.beta
    }

    pub fn gamma(&self) -> &Channel {
        &self.gamma
    }

    pub fn at(&self, k: usize) -> Result<Disturbance, SimError> {
        if k < 1 || k > self.horizon {
            return Err(SimError::OutOfRange {
                k,
                first: 1,
                last: self.horizon,
            });
        }
        Ok(Disturbance::new(
            self.alpha.at(k),
            self.beta.at(k),
            self.gamma.at(k),
        ))
    }

    /// Sorted, deduplicated iterations at which any channel changes.
    pub fn change_points(&self) -> Vec<usize> {
        let mut pts: Vec<usize> = self
            .alpha
            .change_points()
            .chain(self.beta.change_points())
            .chain(self.gamma.change_points())
            .collect();
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

/// Reference trajectory `y_r(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// `amplitude·cos(omega·k)`.
    Cosine { amplitude: f64, omega: f64 },
    /// Piecewise-constant `(start_k, value)` pairs; the last value holds.
    Square { segments: Vec<(usize, f64)> },
    /// `base + amplitude / (1 + exp(−rate·k))`.
    Logistic {
        base: f64,
        amplitude: f64,
        rate: f64,
    },
    /// `base + amplitude·(1 + exp(−rate·k))`.
    Transient {
        base: f64,
        amplitude: f64,
        rate: f64,
    },
    /// Explicit `(k, y_r)` rows, sorted by `k`.
    Table { rows: Vec<(usize, f64)> },
}

impl ReferenceSpec {
    /// `cos(5πk/600)`.
    pub fn case1_cosine() -> Self {
        ReferenceSpec::Cosine {
            amplitude: 1.0,
            omega: 5.0 * std::f64::consts::PI / 600.0,
        }
    }

    /// ±1 square wave switching every 150 iterations.
    pub fn case2_square() -> Self {
        ReferenceSpec::Square {
            segments: vec![(1, 1.0), (150, -1.0), (300, 1.0), (450, -1.0)],
        }
    }

    pub fn train_logistic() -> Self {
        ReferenceSpec::Logistic {
            base: 270.0,
            amplitude: 50.0,
            rate: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ordered = |rows: &[(usize, f64)], what: &str| -> Result<(), SimError> {
            if rows.is_empty() {
                return Err(SimError::Reference(format!("{what} has no rows")));
            }
            if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(SimError::Reference(format!(
                    "{what} iterations must be strictly increasing"
                )));
            }
            if rows.iter().any(|r| !r.1.is_finite()) {
                return Err(SimError::Reference(format!(
                    "{what} contains a non-finite value"
                )));
            }
            Ok(())
        };
        match self {
            ReferenceSpec::Square { segments } => ordered(segments, "square wave"),
            ReferenceSpec::Table { rows } => ordered(rows, "table"),
            _ => Ok(()),
        }
    }

    /// Whether `y_r(k)` is defined for every `k` in `[1, last]`.
    pub fn covers(&self, last: usize) -> bool {
        match self {
            ReferenceSpec::Square { segments } => segments.first().is_some_and(|s| s.0 <= 1),
            ReferenceSpec::Table { rows } => {
                (1..=last).all(|k| rows.binary_search_by_key(&k, |r| r.0).is_ok())
            }
            _ => true,
        }
    }

    pub fn at(&self, k: usize) -> Result<f64, SimError> {
        let kf = k as f64;
        match self {
            ReferenceSpec::Cosine { amplitude, omega } => Ok(amplitude * (omega * kf).cos()),
            ReferenceSpec::Logistic {
                base,
                amplitude,
                rate,
            } => Ok(base + amplitude / (1.0 + (-rate * kf).exp())),
            ReferenceSpec::Transient {
                base,
                amplitude,
                rate,
            } => Ok(base + amplitude * (1.0 + (-rate * kf).exp())),
            ReferenceSpec::Square { segments } => {
                let idx = segments.partition_point(|&(start, _)| start <= k);
                if idx == 0 {
                    return Err(SimError::OutOfRange {
                        k,
                        first: segments.first().map_or(1, |s| s.0),
                        last: usize::MAX,
                    });
                }
                Ok(segments[idx - 1].1)
            }
            ReferenceSpec::Table { rows } => rows
                .binary_search_by_key(&k, |r| r.0)
                .map(|i| rows[i].1)
                .map_err(|_| SimError::OutOfRange {
                    k,
                    first: rows.first().map_or(0, |r| r.0),
                    last: rows.last().map_or(0, |r| r.0),
                }),
        }
    }

    /// Load a two-column `k,y_r` CSV (header row optional).
    pub fn load_table(path: &std::path::Path) -> Result<Self, SimError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| SimError::Reference(e.to_string()))?;
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| SimError::Reference(e.to_string()))?;
            if rec.len() != 2 {
                return Err(SimError::Reference(format!(
                    "row {}: expected 2 columns",
                    i + 1
                )));
            }
            match (rec[0].parse::<usize>(), rec[1].parse::<f64>()) {
                (Ok(k), Ok(v)) => rows.push((k, v)),
                _ if i == 0 => continue,
                _ => {
                    return Err(SimError::Reference(format!(
                        "row {}: cannot parse `{}`",
                        i + 1,
                        rec.as_slice()
                    )))
                }
            }
        }
        let spec = ReferenceSpec::Table { rows };
        spec.validate()?;
        Ok(spec)
    }
}

/// Named noise generator: ChaCha8 seeded with `seed`, standard-normal draws
/// scaled by `σ`. Streams keep independent uses of one seed apart.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    sigma: f64,
}

pub const NOISE_STREAM: u64 = 0;
pub const DISTURBANCE_STREAM: u64 = 1;
pub const SAMPLE_STREAM: u64 = 2;

/// A seeded ChaCha8 generator on the given stream.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl NoiseSource {
    pub fn new(seed: u64, sigma2: f64) -> Result<Self, SimError> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(SimError::NoiseVariance(sigma2));
        }
        Ok(Self {
            rng: seeded_rng(seed, NOISE_STREAM),
            sigma: sigma2.sqrt(),
        })
    }

    pub fn sample(&mut self) -> f64 {
        sample_noise(&mut self.rng, self.sigma * self.sigma)
    }
}

/// One `N(0, σ²)` draw; exactly zero (and no RNG advance) when `σ² = 0`.
pub fn sample_noise<R: rand::Rng + ?Sized>(rng: &mut R, sigma2: f64) -> f64 {
    if sigma2 == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma2.sqrt() * z
}
