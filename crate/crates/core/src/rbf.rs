//! Gaussian RBF surrogate of the unknown drift `f` and input gain `g`.
//!
//! Each branch evaluates `ŵᵀh(x)` with `h_i(x) = exp(-‖x - c_i‖² / (2 b_i²))`.
//! Only the output weights are trained; centers and widths are fixed by the
//! caller, so the offline fit is a linear least-squares problem.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::Disturbance;

#[derive(Debug, Error)]
pub enum RbfError {
    #[error("expected a state of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("branch needs matching, non-empty centers/widths/weights (got {centers}/{widths}/{weights})")]
    Shape {
        centers: usize,
        widths: usize,
        weights: usize,
    },
    #[error("basis {index} has non-positive width {width}")]
    Width { index: usize, width: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("parameter file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed centers and widths (`b̂²`) of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGeometry {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

impl BranchGeometry {
    /// Scalar-state geometry with one shared width.
    pub fn scalar(centers: &[f64], width: f64) -> Self {
        Self {
            centers: centers.iter().map(|&c| vec![c]).collect(),
            widths: vec![width; centers.len()],
        }
    }

    fn validate(&self, dim: Option<usize>) -> Result<usize, RbfError> {
        if self.centers.is_empty() || self.centers.len() != self.widths.len() {
            return Err(RbfError::Shape {
                centers: self.centers.len(),
                widths: self.widths.len(),
                weights: self.widths.len(),
            });
        }
        for (index, &width) in self.widths.iter().enumerate() {
            if !(width > 0.0 && width.is_finite()) {
                return Err(RbfError::Width { index, width });
            }
        }
        let dim = dim.unwrap_or(self.centers[0].len());
        for c in &self.centers {
            if c.len() != dim {
                return Err(RbfError::Dimension {
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfBranch {
    geometry: BranchGeometry,
    weights: Vec<f64>,
}

impl RbfBranch {
    pub fn new(
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, RbfError> {
        Self::from_geometry(BranchGeometry { centers, widths }, weights)
    }

    pub fn from_geometry(geometry: BranchGeometry, weights: Vec<f64>) -> Result<Self, RbfError> {
        if weights.len() != geometry.centers.len() {
            return Err(RbfError::Shape {
                centers: geometry.centers.len(),
                widths: geometry.widths.len(),
                weights: weights.len(),
            });
        }
        geometry.validate(None)?;
        Ok(Self { geometry, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.geometry.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.geometry.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.geometry.widths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn geometry(&self) -> &BranchGeometry {
        &self.geometry
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), RbfError> {
        if x.len() != self.dim() {
            return Err(RbfError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Basis activations `h(x)`, each in `(0, 1]`.
    pub fn basis(&self, x: &[f64]) -> Result<Vec<f64>, RbfError> {
        self.check_dim(x)?;
        Ok(basis_unchecked(&self.geometry, x).collect())
    }

    /// `ŵᵀh(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, RbfError> {
        self.check_dim(x)?;
        Ok(basis_unchecked(&self.geometry, x)
            .zip(&self.weights)
            .map(|(h, w)| h * w)
            .sum())
    }
}

fn basis_unchecked<'a>(
    geometry: &'a BranchGeometry,
    x: &'a [f64],
) -> impl Iterator<Item = f64> + 'a {
    geometry
        .centers
        .iter()
        .zip(&geometry.widths)
        .map(move |(c, &b2)| {
            let d2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci) * (xi - ci)).sum();
            (-d2 / (2.0 * b2)).exp()
        })
}

/// The two-branch network approximating `f` (drift) and `g` (input gain).
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    f_branch: RbfBranch,
    g_branch: RbfBranch,
}

impl RbfNetwork {
    pub fn new(f_branch: RbfBranch, g_branch: RbfBranch) -> Result<Self, RbfError> {
        if f_branch.dim() != g_branch.dim() {
            return Err(RbfError::Dimension {
                expected: f_branch.dim(),
                got: g_branch.dim(),
            });
        }
        Ok(Self { f_branch, g_branch })
    }

    pub fn state_dim(&self) -> usize {
        self.f_branch.dim()
    }

    pub fn f_branch(&self) -> &RbfBranch {
        &self.f_branch
    }

    pub fn g_branch(&self) -> &RbfBranch {
        &self.g_branch
    }

    /// `(f̂(x), ĝ(x))`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, f64), RbfError> {
        Ok((self.f_branch.eval(x)?, self.g_branch.eval(x)?))
    }

    /// One-step prediction `θ(1)·f̂(x) + θ(2)·ĝ(x)·u + θ(3)`.
    pub fn predict_output(&self, theta: &Disturbance, x: &[f64], u: f64) -> Result<f64, RbfError> {
        let (f, g) = self.eval(x)?;
        Ok(theta.alpha * f + theta.beta * g * u + theta.gamma)
    }

    /// Serialize to the plain-text parameter format (see [`RbfNetwork::parse`]).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rbf-network 1");
        let _ = writeln!(out, "state_dim {}", self.state_dim());
        for (name, branch) in [("f", &self.f_branch), ("g", &self.g_branch)] {
            let _ = writeln!(out, "branch {name} {}", branch.len());
            for ((c, w2), w) in branch
                .centers()
                .iter()
                .zip(branch.widths())
                .zip(branch.weights())
            {
                let center: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{} ; {} ; {}", center.join(","), w2, w);
            }
        }
        out
    }

    /// Parse the parameter format:
    ///
    /// ```text
    /// rbf-network 1
    /// state_dim <n>
    /// branch f <count>
    /// <c_1>,...,<c_n> ; <width b²> ; <weight>      (count lines)
    /// branch g <count>
    /// ...
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, RbfError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: &str| RbfError::Parse {
            line,
            msg: msg.to_string(),
        };

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty parameter file"))?;
        if header != "rbf-network 1" {
            return Err(err(ln, "expected header `rbf-network 1`"));
        }
        let (ln, dim_line) = lines.next().ok_or_else(|| err(ln, "missing state_dim"))?;
        let dim: usize = dim_line
            .strip_prefix("state_dim")
            .and_then(|s| s.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| err(ln, "expected `state_dim <positive integer>`"))?;

        let mut branches: [Option<RbfBranch>; 2] = [None, None];
        while let Some((ln, line)) = lines.next() {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("branch") {
                return Err(err(ln, "expected `branch <f|g> <count>`"));
            }
            let slot = match parts.next() {
                Some("f") => 0,
                Some("g") => 1,
                _ => return Err(err(ln, "branch name must be `f` or `g`")),
            };
            if branches[slot].is_some() {
                return Err(err(ln, "duplicate branch"));
            }
            let count: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(ln, "missing basis count"))?;
            let mut geometry = BranchGeometry {
                centers: Vec::with_capacity(count),
                widths: Vec::with_capacity(count),
            };
            let mut weights = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, row) = lines.next().ok_or_else(|| err(ln, "truncated branch"))?;
                let fields: Vec<&str> = row.split(';').map(str::trim).collect();
                if fields.len() != 3 {
                    return Err(err(ln, "basis row must be `center ; width ; weight`"));
                }
                let center: Vec<f64> = fields[0]
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(ln, "bad center coordinate"))?;
                if center.len() != dim {
                    return Err(err(ln, "center dimension differs from state_dim"));
                }
                geometry.centers.push(center);
                geometry
                    .widths
                    .push(fields[1].parse().map_err(|_| err(ln, "bad width"))?);
                weights.push(fields[2].parse().map_err(|_| err(ln, "bad weight"))?);
            }
            branches[slot] = Some(
                RbfBranch::from_geometry(geometry, weights).map_err(|e| err(ln, &e.to_string()))?,
            );
        }
        let [f, g] = branches;
        let f = f.ok_or_else(|| err(0, "missing branch f"))?;
        let g = g.ok_or_else(|| err(0, "missing branch g"))?;
        Self::new(f, g)
    }

    pub fn load(path: &Path) -> Result<Self, RbfError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RbfError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// One historical measurement `(x(k), u(k), y(k+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: Vec<f64>,
    pub u: f64,
    pub y_next: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingDataset {
    pub samples: Vec<TrainingSample>,
    pub ridge: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub network: RbfNetwork,
    pub residual_rms: f64,
}

/// Singular values below this fraction of the largest count as rank loss.
const RANK_TOL: f64 = 1e-12;

/// Fit the output weights of both branches by (ridge-regularized) least
/// squares on `y_next ≈ ŵ_fᵀh_f(x) + ŵ_gᵀh_g(x)·u`.
pub fn train_offline(
    data: &TrainingDataset,
    f_geometry: &BranchGeometry,
    g_geometry: &BranchGeometry,
) -> Result<FitReport, RbfError> {
    let dim = f_geometry.validate(None)?;
    g_geometry.validate(Some(dim))?;
    if !(data.ridge >= 0.0 && data.ridge.is_finite()) {
        return Err(RbfError::Fit(format!(
            "ridge must be a nonnegative number, got {}",
            data.ridge
        )));
    }
    let (nf, ng) = (f_geometry.centers.len(), g_geometry.centers.len());
    let n_params = nf + ng;
    let n = data.samples.len();
    if n == 0 {
        return Err(RbfError::Fit("empty training dataset".into()));
    }
    if n < n_params && data.ridge == 0.0 {
        return Err(RbfError::Fit(format!(
            "{n} samples cannot determine {n_params} weights without regularization"
        )));
    }

    let extra = if data.ridge > 0.0 { n_params } else { 0 };
    let mut design = DMatrix::<f64>::zeros(n + extra, n_params);
    let mut target = DVector::<f64>::zeros(n + extra);
    for (r, s) in data.samples.iter().enumerate() {
        if s.x.len() != dim {
            return Err(RbfError::Dimension {
                expected: dim,
                got: s.x.len(),
            });
        }
        for (c, h) in basis_unchecked(f_geometry, &s.x).enumerate() {
            design[(r, c)] = h;
        }
        for (c, h) in basis_unchecked(g_geometry, &s.x).enumerate() {
            design[(r, nf + c)] = h * s.u;
        }
        target[r] = s.y_next;
    }
    if extra > 0 {
        let sq = data.ridge.sqrt();
        for i in 0..n_params {
            design[(n + i, i)] = sq;
        }
    }

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if data.ridge == 0.0 && (smax == 0.0 || smin <= RANK_TOL * smax) {
        return Err(RbfError::Fit(format!(
            "design matrix is rank deficient (singular values {smin:e} .. {smax:e}); add samples with varied input or set ridge > 0"
        )));
    }
    let weights = svd
        .solve(&target, RANK_TOL * smax)
        .map_err(|e| RbfError::Fit(e.to_string()))?;

    let fitted = design.rows(0, n) * &weights;
    let residual_rms = ((fitted - target.rows(0, n)).norm_squared() / n as f64).sqrt();

    let f_branch = RbfBranch::from_geometry(
        f_geometry.clone(),
        weights.rows(0, nf).iter().copied().collect(),
    )?;
    let g_branch = RbfBranch::from_geometry(
        g_geometry.clone(),
        weights.rows(nf, ng).iter().copied().collect(),
    )?;
    Ok(FitReport {
        network: RbfNetwork::new(f_branch, g_branch)?,
        residual_rms,
    })
}
