use crate::error::{Error, Result};
use crate::sde::StateVector;

/// `N` states with log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub states: Vec<StateVector>,
    pub log_weights: Vec<f64>,
    /// Whether `exp(log_weights)` sums to one.
    pub normalized: bool,
}

impl ParticleEnsemble {
    /// Equally weighted ensemble.
    pub fn uniform(states: Vec<StateVector>) -> Self {
        let n = states.len();
        let lw = -(n as f64).ln();
        Self {
            states,
            log_weights: vec![lw; n],
            normalized: true,
        }
    }

    /// Ensemble with the given log-weights, normalised.
    pub fn weighted(states: Vec<StateVector>, log_weights: &[f64]) -> Result<Self> {
        let w = normalize_log_weights(log_weights)?;
        Ok(Self {
            states,
            log_weights: w.iter().map(|v| v.ln()).collect(),
            normalized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights)
    }
}

pub fn log_sum_exp(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + log_w.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_mean_exp(log_w: &[f64]) -> f64 {
    log_sum_exp(log_w) - (log_w.len() as f64).ln()
}

/// `w_i = exp(log_w_i - logsumexp(log_w))`.
///
/// NaN entries are treated as `-inf`. Fails when no entry is finite.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if log_w.is_empty() || !max.is_finite() {
        return Err(Error::WeightDegeneracy { max_log_likelihood: max });
    }
    let mut w: Vec<f64> = log_w
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(w)
}

/// `1 / Σ w_i²` for normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    ess.clamp(1.0, n)
}

/// `Σ_i w_i x_i`.
pub fn posterior_mean(ensemble: &ParticleEnsemble) -> Result<StateVector> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let w = ensemble.weights()?;
    let mut mean = StateVector::zeros(ensemble.dim());
    for (x, wi) in ensemble.states.iter().zip(&w) {
        mean.axpy(*wi, x, 1.0);
    }
    Ok(mean)
}
