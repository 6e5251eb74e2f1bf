//! Anti-disturbance dual control for unknown affine nonlinear plants.
//!
//! The plant is modelled as
//!
//! ```text
//! y(k+1) = α(k)·f[x(k)] + β(k)·g[x(k)]·u(k) + γ(k) + e(k)
//! ```
//!
//! where `f` and `g` are approximated offline by a pair of Gaussian RBF
//! branches ([`rbf`]), the bounded disturbances `(α, β, γ)` are discretized
//! into a finite candidate grid ([`grid`]), candidate posteriors are learned
//! online by Bayes' rule ([`learner`]), and the applied input is the
//! posterior-weighted blend of per-candidate dual control laws
//! ([`controller`]). Simulated ground-truth plants live in [`plant`] and the
//! run loop, Monte Carlo driver, metrics and file formats in [`harness`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod controller;
pub mod grid;
pub mod harness;
pub mod learner;
pub mod plant;
pub mod rbf;

pub use controller::{ControlDecision, ControlError, ControllerConfig};
pub use grid::{BoundedInterval, CandidateGrid, Disturbance, GridError, MidpointSet};
pub use learner::{LearnerError, LearnerState, Prediction, ResetPolicy};
pub use plant::{DisturbanceSchedule, NoiseSource, PlantModel, ReferenceSpec, SimError};
pub use rbf::{RbfBranch, RbfError, RbfNetwork, TrainingDataset};
