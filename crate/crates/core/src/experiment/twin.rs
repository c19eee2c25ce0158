use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{Algorithm, ExperimentConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::filters::{run_filter_partial, DegeneracyPolicy, FilterRun, RunOptions, Scheme, StepOptions};
use crate::kernel::{
    BarrierKernel, DiagonalGaussianPrior, EulerKernel, GaussianLikelihoods, PriorSampler, RejectionKernel,
    SuperlevelSchedule,
};
use crate::models::{make_observation_matrix, Lorenz96, Lorenz96Params, OrnsteinUhlenbeck};
use crate::rng::{Stream, Streams};
use crate::sde::{integrate, simulate_ground_truth, substep_count, SdeModel, StateVector, TimeGrid};
use crate::ssm::GaussianObservation;

/// The diffusion named by a config.
#[derive(Debug, Clone)]
pub enum ExperimentModel {
    Lorenz96(Lorenz96),
    Ou(OrnsteinUhlenbeck),
}

impl ExperimentModel {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        match *cfg {
            ModelConfig::Lorenz96 { d_x, forcing, sigma_x } => {
                Ok(Self::Lorenz96(Lorenz96::new(Lorenz96Params { dim: d_x, forcing, sigma_x })?))
            }
            ModelConfig::Ou { d_x, theta, sigma } => Ok(Self::Ou(OrnsteinUhlenbeck::new(theta, sigma, d_x)?)),
            ModelConfig::Discrete { .. } => Err(Error::InvalidConfig(
                "model.type: the discrete fixture is only available to `verify`".into(),
            )),
        }
    }
}

impl SdeModel for ExperimentModel {
    fn state_dim(&self) -> usize {
        match self {
            Self::Lorenz96(m) => m.state_dim(),
            Self::Ou(m) => m.state_dim(),
        }
    }

    fn noise_dim(&self) -> usize {
        match self {
            Self::Lorenz96(m) => m.noise_dim(),
            Self::Ou(m) => m.noise_dim(),
        }
    }

    fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            Self::Lorenz96(m) => m.drift_into(x, t, out),
            Self::Ou(m) => m.drift_into(x, t, out),
        }
    }

    fn diffusion(&self, x: &StateVector, t: f64) -> DMatrix<f64> {
        match self {
            Self::Lorenz96(m) => m.diffusion(x, t),
            Self::Ou(m) => m.diffusion(x, t),
        }
    }

    fn add_diffusion(&self, x: &[f64], t: f64, dw: &[f64], out: &mut [f64]) {
        match self {
            Self::Lorenz96(m) => m.add_diffusion(x, t, dw, out),
            Self::Ou(m) => m.add_diffusion(x, t, dw, out),
        }
    }
}

/// Ground truth `X_0..X_M`, the observation matrix `H` (`d_x × d_y`) and the
/// observations `y_1..y_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinData {
    pub truth: Vec<StateVector>,
    pub h: DMatrix<f64>,
    pub ys: Vec<DVector<f64>>,
}

impl TwinData {
    pub fn steps(&self) -> usize {
        self.ys.len()
    }
}

pub fn time_grid(cfg: &ExperimentConfig, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(0.0, cfg.observation.h_o, cfg.integration.h, steps)
}

/// Draws the true initial state: `(F, …, F) + N(0, I)` for Lorenz 96, the
/// origin for OU, then integrated for the spin-up period.
fn initial_truth(cfg: &ExperimentConfig, model: &ExperimentModel, streams: &Streams) -> Result<StateVector> {
    let d = model.state_dim();
    let mut rng = streams.get(Stream::Truth, 0, 0);
    let mut x = match &cfg.model {
        ModelConfig::Lorenz96 { forcing, .. } => {
            StateVector::from_fn(d, |_, _| forcing + rng.sample::<f64, _>(StandardNormal))
        }
        _ => StateVector::zeros(d),
    };
    if cfg.run.spinup > 0.0 {
        let substeps = substep_count(cfg.run.spinup, cfg.integration.h)
            .map_err(|e| Error::InvalidConfig(format!("run.spinup: {e}")))?;
        integrate(model, &mut x, -cfg.run.spinup, cfg.integration.h, substeps, &mut rng)?;
    }
    Ok(x)
}

/// Simulates a twin experiment from `cfg.run.seed`.
pub fn simulate_twin(cfg: &ExperimentConfig) -> Result<TwinData> {
    let model = ExperimentModel::from_config(&cfg.model)?;
    let streams = Streams::new(cfg.run.seed);
    let x0 = initial_truth(cfg, &model, &streams)?;
    let grid = time_grid(cfg, cfg.run.steps)?;
    let truth = simulate_ground_truth(&model, &x0, &grid, &mut streams.get(Stream::Truth, 1, 0))?;
    let h = make_observation_matrix(
        model.state_dim(),
        cfg.d_y(),
        cfg.observation.sigma_v,
        &mut streams.get(Stream::ObservationMatrix, 0, 0),
    )?;
    let obs = GaussianObservation::isotropic(&h, cfg.observation.sigma_y.powi(2))?;
    let mut noise = streams.get(Stream::ObservationNoise, 0, 0);
    let ys = truth[1..].iter().map(|x| obs.sample(x, &mut noise)).collect();
    Ok(TwinData { truth, h, ys })
}

/// Random streams of a filter run, independent of the data streams.
pub fn filter_streams(seed: u64) -> Streams {
    Streams::new(seed).child(Stream::Repetition, u64::MAX, 0)
}

/// Filter settings that are not part of the config.
#[derive(Debug, Clone, Default)]
pub struct FilterRequest {
    pub degeneracy: DegeneracyPolicy,
    pub parallel: bool,
    pub snapshot_steps: Vec<usize>,
}

/// Runs `algorithm` on `data`; returns the completed part of the run and the
/// error that stopped it, if any.
pub fn run_twin_filter(
    cfg: &ExperimentConfig,
    data: &TwinData,
    algorithm: Algorithm,
    seed: u64,
    request: &FilterRequest,
) -> (Option<FilterRun>, Option<Error>) {
    match build_and_run(cfg, data, algorithm, seed, request) {
        Ok(v) => v,
        Err(e) => (None, Some(e)),
    }
}

fn build_and_run(
    cfg: &ExperimentConfig,
    data: &TwinData,
    algorithm: Algorithm,
    seed: u64,
    request: &FilterRequest,
) -> Result<(Option<FilterRun>, Option<Error>)> {
    let model = ExperimentModel::from_config(&cfg.model)?;
    let d = model.state_dim();
    if data.h.nrows() != d || data.truth.first().map(|x| x.len()) != Some(d) {
        return Err(Error::Dimension { context: "twin data state dimension", expected: d, got: data.h.nrows() });
    }
    if data.h.ncols() != cfg.d_y() {
        return Err(Error::Dimension { context: "observation dimension", expected: cfg.d_y(), got: data.h.ncols() });
    }
    let steps = data.steps();
    let grid = time_grid(cfg, steps)?;
    let obs = Arc::new(GaussianObservation::isotropic(&data.h, cfg.observation.sigma_y.powi(2))?);
    let ys = Arc::new(data.ys.clone());
    let lik = GaussianLikelihoods { obs: obs.clone(), ys: ys.clone() };
    let mean = data.truth[0].clone();
    let mut prior = DiagonalGaussianPrior::isotropic(mean.clone(), cfg.model.noise_scale());
    prior.max_attempts = cfg.filter.max_attempts;
    if algorithm.is_constrained() {
        prior = prior.truncated_to_hypercube(&mean, cfg.c0_side())?;
    }
    let opts = RunOptions {
        step: StepOptions {
            parallel: request.parallel,
            resampling: cfg.filter.resampling,
            degeneracy: request.degeneracy,
        },
        snapshot_steps: request.snapshot_steps.clone(),
    };
    let streams = filter_streams(seed);
    let count = cfg.filter.particles;
    let euler = EulerKernel { model: model.clone(), grid };
    let run = |scheme: Scheme<'_>, prior: &dyn PriorSampler| {
        run_filter_partial(scheme, prior, &lik, steps, count, &streams, &opts)
    };
    Ok(match algorithm {
        Algorithm::Bootstrap => run(Scheme::Bootstrap(&euler), &prior),
        Algorithm::Auxiliary => run(Scheme::Auxiliary(&euler), &prior),
        Algorithm::ConstrainedRejection => {
            let schedule = SuperlevelSchedule { obs, ys, threshold: cfg.filter.constraint.threshold };
            let kernel = RejectionKernel { inner: euler, constraints: schedule, max_attempts: cfg.filter.max_attempts };
            run(Scheme::Bootstrap(&kernel), &prior)
        }
        Algorithm::ConstrainedBarrier => {
            let kernel = BarrierKernel {
                model,
                grid,
                obs,
                ys,
                threshold: cfg.filter.constraint.threshold,
                config: cfg.barrier(),
            };
            run(Scheme::Bootstrap(&kernel), &prior)
        }
    })
}

/// Estimates for steps `1..=M`, padding an incomplete run with its last
/// available estimate (the initial mean if no step completed).
pub fn padded_estimates(run: Option<&FilterRun>, initial: &StateVector, steps: usize) -> Vec<StateVector> {
    let mut out: Vec<StateVector> = run.map(|r| r.estimates.clone()).unwrap_or_default();
    let fill = out
        .last()
        .cloned()
        .or_else(|| run.map(|r| r.initial_mean.clone()))
        .unwrap_or_else(|| initial.clone());
    out.resize(steps, fill);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::nmse;

    fn small(d_x: usize, steps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::lorenz96(d_x);
        cfg.run.steps = steps;
        cfg.run.spinup = 1.0;
        cfg.integration.h = 0.01;
        cfg
    }

    #[test]
    fn simulation_shapes_and_determinism() {
        let cfg = small(8, 5);
        let a = simulate_twin(&cfg).unwrap();
        assert_eq!(a.truth.len(), 6);
        assert_eq!(a.ys.len(), 5);
        assert_eq!(a.h.shape(), (8, 4));
        assert_eq!(a, simulate_twin(&cfg).unwrap());
        let mut other = cfg.clone();
        other.run.seed = 1;
        assert_ne!(a.truth, simulate_twin(&other).unwrap().truth);
    }

    #[test]
    fn zero_steps_gives_single_state() {
        let data = simulate_twin(&small(8, 0)).unwrap();
        assert_eq!(data.truth.len(), 1);
        assert!(data.ys.is_empty());
    }

    #[test]
    fn every_algorithm_runs_on_small_problem() {
        let mut cfg = small(8, 10);
        // the rejection sampler needs a set that holds most of the kernel mass
        cfg.filter.constraint.threshold = -200.0;
        let data = simulate_twin(&cfg).unwrap();
        for alg in Algorithm::ALL {
            let (run, err) = run_twin_filter(&cfg, &data, alg, 3, &FilterRequest::default());
            assert!(err.is_none(), "{alg:?}: {err:?}");
            let run = run.unwrap();
            assert_eq!(run.estimates.len(), 10);
            let e = nmse(&data.truth[1..], &run.estimates).unwrap();
            assert!(e.is_finite() && e < 1.0, "{alg:?} nmse {e}");
        }
    }

    #[test]
    fn padding_repeats_last_estimate() {
        let init = StateVector::from_element(2, 1.0);
        let out = padded_estimates(None, &init, 3);
        assert_eq!(out, vec![init.clone(); 3]);
    }
}
