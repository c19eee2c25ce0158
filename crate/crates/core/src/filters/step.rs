use std::time::Instant;

use rayon::prelude::*;

use super::ensemble::{effective_sample_size, log_sum_exp, normalize_log_weights, ParticleEnsemble};
use super::resample::Resampling;
use crate::error::{Error, Result};
use crate::kernel::{ConstraintSchedule, LogLikelihood, RejectionKernel, TransitionKernel};
use crate::rng::{Stream, Streams};
use crate::sde::StateVector;

/// What to do when every particle weight vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneracyPolicy {
    /// Raise [`Error::WeightDegeneracy`].
    #[default]
    Fail,
    /// Continue with uniform weights for that step and flag it. Particles
    /// whose propagation blows up are kept in place with zero weight.
    UniformFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOptions {
    pub parallel: bool,
    pub resampling: Resampling,
    pub degeneracy: DegeneracyPolicy,
}

/// Diagnostics of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Weighted (pre-resampling) posterior mean.
    pub mean: StateVector,
    pub ess: f64,
    pub attempts_mean: f64,
    pub attempts_max: usize,
    pub log_evidence_increment: f64,
    pub fallback: bool,
    /// Seconds; excluded from deterministic outputs.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Weighted ensemble before resampling.
    pub weighted: ParticleEnsemble,
    /// Equally weighted ensemble after resampling.
    pub ensemble: ParticleEnsemble,
    pub diagnostics: StepDiagnostics,
}

/// How the constrained filter draws from the truncated kernel.
pub enum ConstraintMode<'a> {
    /// Exact: rejection from `base` until the draw lands in `C_n`.
    Rejection {
        base: &'a dyn TransitionKernel,
        constraints: &'a dyn ConstraintSchedule,
        max_attempts: usize,
    },
    /// Approximate: a kernel built on the barrier-modified drift.
    Barrier { kernel: &'a dyn TransitionKernel },
}

fn map_particles<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

struct Propagated {
    states: Vec<StateVector>,
    attempts: Vec<usize>,
}

fn propagate(
    n: usize,
    sources: &[&StateVector],
    kernel: &dyn TransitionKernel,
    streams: &Streams,
    opts: &StepOptions,
) -> Result<(Propagated, Vec<bool>)> {
    let draws = map_particles(sources.len(), opts.parallel, |i| {
        let mut rng = streams.get(Stream::Propagate, n as u64, i as u64);
        kernel.sample_counted(n, sources[i], &mut rng)
    });
    let mut states = Vec::with_capacity(draws.len());
    let mut attempts = Vec::with_capacity(draws.len());
    let mut failed = Vec::with_capacity(draws.len());
    for (i, d) in draws.into_iter().enumerate() {
        match d {
            Ok((x, a)) => {
                states.push(x);
                attempts.push(a);
                failed.push(false);
            }
            Err(Error::IntegrationBlowup { .. }) if opts.degeneracy == DegeneracyPolicy::UniformFallback => {
                states.push(sources[i].clone());
                attempts.push(1);
                failed.push(true);
            }
            Err(Error::ConstraintInfeasible { attempts, origin, acceptance, .. }) => {
                return Err(Error::ConstraintInfeasible { attempts, origin, acceptance, particle: Some(i) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((Propagated { states, attempts }, failed))
}

fn log_likelihoods(
    n: usize,
    states: &[StateVector],
    lik: &dyn LogLikelihood,
    opts: &StepOptions,
) -> Vec<f64> {
    map_particles(states.len(), opts.parallel, |i| lik.log_likelihood(n, &states[i]))
}

/// Normalises, falling back to uniform weights when allowed. A single
/// particle is always kept.
fn normalize_or_fallback(log_w: &[f64], opts: &StepOptions) -> Result<(Vec<f64>, bool)> {
    if log_w.len() == 1 {
        return Ok((vec![1.0], false));
    }
    match normalize_log_weights(log_w) {
        Ok(w) => Ok((w, false)),
        Err(e) => match opts.degeneracy {
            DegeneracyPolicy::Fail => Err(e),
            DegeneracyPolicy::UniformFallback => Ok((vec![1.0 / log_w.len() as f64; log_w.len()], true)),
        },
    }
}

fn weighted_mean(states: &[StateVector], w: &[f64]) -> StateVector {
    let mut mean = StateVector::zeros(states[0].len());
    for (x, wi) in states.iter().zip(w) {
        if *wi > 0.0 {
            mean.axpy(*wi, x, 1.0);
        }
    }
    mean
}

fn finish(
    n: usize,
    states: Vec<StateVector>,
    weights: Vec<f64>,
    fallback: bool,
    attempts: &[usize],
    log_evidence_increment: f64,
    streams: &Streams,
    opts: &StepOptions,
    started: Instant,
) -> StepOutput {
    let count = states.len();
    let mean = weighted_mean(&states, &weights);
    let mut rng = streams.get(Stream::Resample, n as u64, 0);
    let idx = opts.resampling.indices(&weights, count, &mut rng);
    let resampled: Vec<StateVector> = idx.iter().map(|&i| states[i].clone()).collect();
    let diagnostics = StepDiagnostics {
        step: n,
        mean,
        ess: effective_sample_size(&weights),
        attempts_mean: attempts.iter().sum::<usize>() as f64 / count as f64,
        attempts_max: attempts.iter().copied().max().unwrap_or(0),
        log_evidence_increment,
        fallback,
        wall_time: started.elapsed().as_secs_f64(),
    };
    let weighted = ParticleEnsemble {
        states,
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        normalized: true,
    };
    StepOutput { weighted, ensemble: ParticleEnsemble::uniform(resampled), diagnostics }
}

fn prior_log_weights(ensemble: &ParticleEnsemble) -> Result<Vec<f64>> {
    if ensemble.normalized {
        Ok(ensemble.log_weights.clone())
    } else {
        Ok(ensemble.weights()?.iter().map(|w| w.ln()).collect())
    }
}

/// One propagate → weight → resample cycle of the bootstrap filter at step
/// `n`. Particle `i` draws its transition from the stream keyed `(n, i)`, so
/// sequential and parallel runs agree bit for bit.
pub fn bootstrap_pf_step(
    ensemble: &ParticleEnsemble,
    n: usize,
    kernel: &dyn TransitionKernel,
    lik: &dyn LogLikelihood,
    streams: &Streams,
    opts: &StepOptions,
) -> Result<StepOutput> {
    let started = Instant::now();
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let prev_lw = prior_log_weights(ensemble)?;
    let sources: Vec<&StateVector> = ensemble.states.iter().collect();
    let (prop, failed) = propagate(n, &sources, kernel, streams, opts)?;
    let ll = log_likelihoods(n, &prop.states, lik, opts);
    let log_w: Vec<f64> = ll
        .iter()
        .zip(&prev_lw)
        .zip(&failed)
        .map(|((l, p), f)| if *f { f64::NEG_INFINITY } else { l + p })
        .collect();
    let (weights, fallback) = normalize_or_fallback(&log_w, opts).map_err(|_| degeneracy(&ll))?;
    let increment = log_sum_exp(&log_w);
    Ok(finish(n, prop.states, weights, fallback, &prop.attempts, increment, streams, opts, started))
}

fn degeneracy(ll: &[f64]) -> Error {
    Error::WeightDegeneracy {
        max_log_likelihood: ll.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// The bootstrap cycle applied to the constrained model: propagation draws
/// from the truncated kernel, weights stay `g_n`.
pub fn constrained_pf_step(
    ensemble: &ParticleEnsemble,
    n: usize,
    mode: ConstraintMode<'_>,
    lik: &dyn LogLikelihood,
    streams: &Streams,
    opts: &StepOptions,
) -> Result<StepOutput> {
    match mode {
        ConstraintMode::Rejection { base, constraints, max_attempts } => {
            let kernel = RejectionKernel { inner: base, constraints, max_attempts };
            bootstrap_pf_step(ensemble, n, &kernel, lik, streams, opts)
        }
        ConstraintMode::Barrier { kernel } => bootstrap_pf_step(ensemble, n, kernel, lik, streams, opts),
    }
}

/// Auxiliary particle filter step: ancestors are preselected by
/// `g_n(μ_n^i)` at the kernel's predictive point, then propagated and
/// reweighted by `g_n(x̄) / g_n(μ^{ancestor})`.
pub fn auxiliary_pf_step(
    ensemble: &ParticleEnsemble,
    n: usize,
    kernel: &dyn TransitionKernel,
    lik: &dyn LogLikelihood,
    streams: &Streams,
    opts: &StepOptions,
) -> Result<StepOutput> {
    let started = Instant::now();
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let count = ensemble.len();
    let prev_lw = prior_log_weights(ensemble)?;
    let points = map_particles(count, opts.parallel, |i| kernel.predictive_point(n, &ensemble.states[i]));
    let mut first_ll = Vec::with_capacity(count);
    for p in points {
        first_ll.push(match p {
            Ok(mu) => lik.log_likelihood(n, &mu),
            Err(Error::IntegrationBlowup { .. }) if opts.degeneracy == DegeneracyPolicy::UniformFallback => {
                f64::NEG_INFINITY
            }
            Err(e) => return Err(e),
        });
    }
    let first_lw: Vec<f64> = first_ll.iter().zip(&prev_lw).map(|(l, p)| l + p).collect();
    let (lambda, fallback1) = normalize_or_fallback(&first_lw, opts).map_err(|_| degeneracy(&first_ll))?;
    let mut rng = streams.get(Stream::Resample, n as u64, 1);
    let ancestors = opts.resampling.indices(&lambda, count, &mut rng);

    let sources: Vec<&StateVector> = ancestors.iter().map(|&a| &ensemble.states[a]).collect();
    let (prop, failed) = propagate(n, &sources, kernel, streams, opts)?;
    let ll = log_likelihoods(n, &prop.states, lik, opts);
    let log_w: Vec<f64> = ll
        .iter()
        .zip(&ancestors)
        .zip(&failed)
        .map(|((l, &a), f)| {
            if *f {
                f64::NEG_INFINITY
            } else if first_ll[a] == f64::NEG_INFINITY {
                // only reachable under uniform fallback of the first stage
                *l
            } else {
                l - first_ll[a]
            }
        })
        .collect();
    let (weights, fallback2) = normalize_or_fallback(&log_w, opts).map_err(|_| degeneracy(&ll))?;
    let increment = log_sum_exp(&first_lw) + log_sum_exp(&log_w) - (count as f64).ln();
    Ok(finish(
        n,
        prop.states,
        weights,
        fallback1 || fallback2,
        &prop.attempts,
        increment,
        streams,
        opts,
        started,
    ))
}
