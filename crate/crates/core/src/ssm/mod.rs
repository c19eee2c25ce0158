//! Observation likelihoods, constraint sets, rejection samplers for truncated
//! kernels and the barrier-modified drift.

mod barrier;
mod constraint;
mod observation;
mod rejection;

pub use barrier::{barrier_drift, BarrierConfig, BarrierModel};
pub use constraint::{hypercube_constraint, superlevel_constraint, ConstraintKind, ConstraintSet};
pub use observation::{gaussian_log_likelihood, GaussianObservation};
pub use rejection::{
    sample_constrained_kernel_rejection, sample_constrained_prior, RejectionDraw,
    DEFAULT_MAX_ATTEMPTS,
};
