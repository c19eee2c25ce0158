use super::ensemble::ParticleEnsemble;
use super::step::{auxiliary_pf_step, bootstrap_pf_step, StepDiagnostics, StepOptions};
use crate::error::{Error, Result};
use crate::kernel::{LogLikelihood, PriorSampler, TransitionKernel};
use crate::rng::{Stream, Streams};
use crate::sde::StateVector;

/// Which particle scheme drives a run. Constrained filters are the bootstrap
/// scheme on a constrained kernel and prior.
#[derive(Clone, Copy)]
pub enum Scheme<'a> {
    Bootstrap(&'a dyn TransitionKernel),
    Auxiliary(&'a dyn TransitionKernel),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub step: StepOptions,
    /// Steps (0 = initial ensemble) whose weighted ensembles are kept.
    pub snapshot_steps: Vec<usize>,
}

/// Weighted ensemble at a given step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub ensemble: ParticleEnsemble,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub initial_mean: StateVector,
    /// Maximum proposals any particle of the initial ensemble needed.
    pub initial_attempts_max: usize,
    /// Posterior means for steps `1..=trace.len()`.
    pub estimates: Vec<StateVector>,
    pub trace: Vec<StepDiagnostics>,
    pub snapshots: Vec<Snapshot>,
}

impl FilterRun {
    pub fn steps_completed(&self) -> usize {
        self.trace.len()
    }
}

/// `N` equally weighted draws from the prior, particle `i` on its own stream.
pub fn initial_ensemble(
    prior: &dyn PriorSampler,
    count: usize,
    streams: &Streams,
    parallel: bool,
) -> Result<(ParticleEnsemble, usize)> {
    if count == 0 {
        return Err(Error::InvalidInput("particle count must be >= 1".into()));
    }
    let draw = |i: usize| prior.sample_counted(&mut streams.get(Stream::Prior, 0, i as u64));
    let draws: Vec<Result<(StateVector, usize)>> = if parallel {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(draw).collect()
    } else {
        (0..count).map(draw).collect()
    };
    let mut states = Vec::with_capacity(count);
    let mut worst = 0;
    for (i, d) in draws.into_iter().enumerate() {
        match d {
            Ok((x, a)) => {
                states.push(x);
                worst = worst.max(a);
            }
            Err(Error::ConstraintInfeasible { attempts, origin, acceptance, .. }) => {
                return Err(Error::ConstraintInfeasible { attempts, origin, acceptance, particle: Some(i) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((ParticleEnsemble::uniform(states), worst))
}

/// Runs `steps` filter steps and returns whatever was completed together with
/// the error that stopped the run, if any. The error carries its step index.
pub fn run_filter_partial(
    scheme: Scheme<'_>,
    prior: &dyn PriorSampler,
    lik: &dyn LogLikelihood,
    steps: usize,
    count: usize,
    streams: &Streams,
    opts: &RunOptions,
) -> (Option<FilterRun>, Option<Error>) {
    let (mut ensemble, initial_attempts_max) = match initial_ensemble(prior, count, streams, opts.step.parallel) {
        Ok(v) => v,
        Err(e) => return (None, Some(e.at_step(0))),
    };
    let mut run = FilterRun {
        initial_mean: super::posterior_mean(&ensemble).expect("non-empty ensemble"),
        initial_attempts_max,
        estimates: Vec::with_capacity(steps),
        trace: Vec::with_capacity(steps),
        snapshots: Vec::new(),
    };
    if opts.snapshot_steps.contains(&0) {
        run.snapshots.push(Snapshot { step: 0, ensemble: ensemble.clone() });
    }
    for n in 1..=steps {
        let out = match scheme {
            Scheme::Bootstrap(k) => bootstrap_pf_step(&ensemble, n, k, lik, streams, &opts.step),
            Scheme::Auxiliary(k) => auxiliary_pf_step(&ensemble, n, k, lik, streams, &opts.step),
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => return (Some(run), Some(e.at_step(n))),
        };
        if opts.snapshot_steps.contains(&n) {
            run.snapshots.push(Snapshot { step: n, ensemble: out.weighted });
        }
        run.estimates.push(out.diagnostics.mean.clone());
        run.trace.push(out.diagnostics);
        ensemble = out.ensemble;
    }
    (Some(run), None)
}

/// Runs `steps` filter steps; any step error aborts the run.
pub fn run_filter(
    scheme: Scheme<'_>,
    prior: &dyn PriorSampler,
    lik: &dyn LogLikelihood,
    steps: usize,
    count: usize,
    streams: &Streams,
    opts: &RunOptions,
) -> Result<FilterRun> {
    match run_filter_partial(scheme, prior, lik, steps, count, streams, opts) {
        (Some(run), None) => Ok(run),
        (_, Some(e)) => Err(e),
        (None, None) => unreachable!("a run without an ensemble always reports an error"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::DegeneracyPolicy;
    use crate::kernel::{DiagonalGaussianPrior, EulerKernel, GaussianLikelihoods};
    use crate::models::{make_observation_matrix, Lorenz96, Lorenz96Params};
    use crate::sde::{simulate_ground_truth, TimeGrid};
    use crate::ssm::GaussianObservation;
    use std::sync::Arc;

    fn l96_problem(steps: usize) -> (EulerKernel<Lorenz96>, DiagonalGaussianPrior, GaussianLikelihoods) {
        let params = Lorenz96Params::standard(8);
        let model = Lorenz96::new(params).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 0.01, steps).unwrap();
        let streams = Streams::new(77);
        let x0 = StateVector::from_fn(8, |i, _| 8.0 + i as f64 * 0.1);
        let truth = simulate_ground_truth(&model, &x0, &grid, &mut streams.get(Stream::Truth, 0, 0)).unwrap();
        let h = make_observation_matrix(8, 4, 5e-4, &mut streams.get(Stream::ObservationMatrix, 0, 0)).unwrap();
        let obs = Arc::new(GaussianObservation::isotropic(&h, 0.5).unwrap());
        let mut noise = streams.get(Stream::ObservationNoise, 0, 0);
        let ys: Vec<_> = truth[1..].iter().map(|x| obs.sample(x, &mut noise)).collect();
        let prior = DiagonalGaussianPrior::isotropic(x0, params.sigma_x);
        (EulerKernel { model, grid }, prior, GaussianLikelihoods { obs, ys: Arc::new(ys) })
    }

    #[test]
    fn zero_steps_returns_initial_statistics() {
        let (kernel, prior, lik) = l96_problem(0);
        let run = run_filter(Scheme::Bootstrap(&kernel), &prior, &lik, 0, 20, &Streams::new(1), &RunOptions::default())
            .unwrap();
        assert!(run.estimates.is_empty() && run.trace.is_empty());
        assert_eq!(run.initial_mean.len(), 8);
    }

    #[test]
    fn sequential_and_parallel_traces_identical() {
        let (kernel, prior, lik) = l96_problem(10);
        let seq = RunOptions { snapshot_steps: vec![0, 5], ..Default::default() };
        let mut par = seq.clone();
        par.step.parallel = true;
        for scheme in [Scheme::Bootstrap(&kernel), Scheme::Auxiliary(&kernel)] {
            let a = run_filter(scheme, &prior, &lik, 10, 64, &Streams::new(5), &seq).unwrap();
            let b = run_filter(scheme, &prior, &lik, 10, 64, &Streams::new(5), &par).unwrap();
            assert_eq!(a.estimates, b.estimates);
            assert_eq!(a.snapshots.len(), 2);
            assert_eq!(a.snapshots[1].ensemble, b.snapshots[1].ensemble);
            for (x, y) in a.trace.iter().zip(&b.trace) {
                assert_eq!((x.ess, x.log_evidence_increment), (y.ess, y.log_evidence_increment));
            }
        }
    }

    #[test]
    fn errors_carry_step_index_and_partial_run() {
        let (kernel, prior, _) = l96_problem(6);
        let lik = |n: usize, _: &StateVector| if n == 4 { f64::NEG_INFINITY } else { 0.0 };
        let (run, err) =
            run_filter_partial(Scheme::Bootstrap(&kernel), &prior, &lik, 6, 10, &Streams::new(2), &RunOptions::default());
        let err = err.unwrap();
        assert_eq!(err.step(), Some(4));
        assert!(err.is_degeneracy());
        assert_eq!(run.unwrap().steps_completed(), 3);

        let mut opts = RunOptions::default();
        opts.step.degeneracy = DegeneracyPolicy::UniformFallback;
        let run = run_filter(Scheme::Bootstrap(&kernel), &prior, &lik, 6, 10, &Streams::new(2), &opts).unwrap();
        assert!(run.trace[3].fallback && !run.trace[2].fallback);
    }
}
