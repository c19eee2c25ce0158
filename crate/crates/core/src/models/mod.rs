//! Concrete model instances: stochastic Lorenz 96, Ornstein–Uhlenbeck, the
//! random observation matrix, and linear-Gaussian / finite-state oracle models.

mod discrete;
mod linear_gaussian;
mod lorenz96;
mod observation_matrix;
mod ou;

pub use discrete::{mixing_discrete_ssm, DiscreteSsm, STOCHASTIC_TOLERANCE};
pub use linear_gaussian::LinearGaussianSsm;
pub use lorenz96::{lorenz96_drift, lorenz96_drift_into, lorenz96_model, Lorenz96, Lorenz96Params};
pub use observation_matrix::{make_observation_matrix, DEFAULT_SIGMA_V};
pub use ou::{ou_exact_kernel, ou_euler_kernel, OrnsteinUhlenbeck, OuTransition};
