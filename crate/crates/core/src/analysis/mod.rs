//! Metrics and numerical checks of the filtering theory: NMSE, total
//! variation, mixing constants and contraction profiles, constraint gaps,
//! convergence-rate fits, KDE marginals and goodness-of-fit helpers.

mod gap;
mod kde;
mod metrics;
mod rates;
mod stability;
mod stats;
pub mod verify;

pub use gap::{constraint_gap_exact, constrained_discrete_filter, ConstraintGap};
pub use kde::{kde_marginal, silverman_bandwidth, DensityEstimate};
pub use metrics::{nmse, tv_distance};
pub use rates::{fit_loglog, mc_rate_fit, ou_weak_error_mc, weak_order_fit, RateFit};
pub use stability::{
    contraction_profile, mixing_constant, truncated_kernel, truncated_mixing_constant, ContractionPoint,
};
pub use stats::{chi_square_gof, clamped_gaussian_mean, ks_one_sample, GofResult};
