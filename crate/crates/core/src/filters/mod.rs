//! Filtering algorithms: the bootstrap particle filter, its constrained
//! (rejection and barrier) variants, an auxiliary particle filter, the Kalman
//! filter and the exact finite-state recursion.

mod discrete;
mod ensemble;
mod kalman;
mod resample;
mod runner;
mod step;

pub use discrete::{exact_discrete_filter, exact_discrete_filter_step};
pub use ensemble::{effective_sample_size, log_mean_exp, log_sum_exp, normalize_log_weights, posterior_mean, ParticleEnsemble};
pub use kalman::{kalman_filter, kalman_step, KalmanState};
pub use resample::{multinomial_indices, multinomial_resample, systematic_indices, Resampling};
pub use runner::{
    initial_ensemble, run_filter, run_filter_partial, FilterRun, RunOptions, Scheme, Snapshot,
};
pub use step::{
    auxiliary_pf_step, bootstrap_pf_step, constrained_pf_step, ConstraintMode, DegeneracyPolicy,
    StepDiagnostics, StepOptions, StepOutput,
};
