//! Bayesian sequential learning on one-dimensional truncated domains.
//!
//! The crate runs exact and approximate posterior sequences for inverse
//! problems, state estimation and parameter-state estimation, and computes
//! the certified quantities that go with them:
//!
//! * [`metrics`]: total variation, Hellinger and 1-Wasserstein distances,
//!   plus distances between scaled (unnormalized) measures.
//! * [`models`] and [`bayes`]: likelihood/transition models, their Lipschitz
//!   ingredients, and the prior-to-posterior map (conjugate, grid, Gaussian
//!   projection, bootstrap particle).
//! * [`bounds`]: per-step Lipschitz constants of the prior-to-posterior map
//!   and the recursive learning-error ledgers built from them.
//! * [`reduction`]: sufficient conditions for one-step error reduction.
//! * [`onlinevi`]: learning-error bounds for online variational inference.
//! * [`harness`]: experiment drivers, fuzzing and CSV/SVG output behind the
//!   `bsl` binary.
//!
//! Every density on a grid is treated as the discrete measure that puts mass
//! `w_i * p_i` on node `x_i`, where `w_i` are the composite trapezoid
//! weights. Evidences, distances and reduction integrals are all sums against
//! that measure, so the inequalities the crate certifies hold exactly for the
//! objects it computes with.

pub mod bayes;
pub mod bounds;
pub mod domains;
mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod onlinevi;
pub mod reduction;
pub(crate) mod special;

pub use domains::{
    discretize, moments, DomainSpec, Distribution, Gaussian1D, GridDensity, JointGrid2D,
    ParticleSet,
};
pub use error::{Error, Result};
pub use metrics::{DistanceReport, MetricKind};
pub use models::{
    ConstantsReport, LikelihoodFamily, LikelihoodModel, Problem, ProblemKind, SystemSpec,
    TransitionFamily, TransitionModel,
};

/// Evidences at or below this value count as zero (inadmissible prior).
pub const EVIDENCE_FLOOR: f64 = 1e-300;
