use nalgebra::{DMatrix, DVector};

use super::metrics::tv_distance;
use crate::error::{Error, Result};
use crate::filters::exact_discrete_filter_step;
use crate::models::DiscreteSsm;

/// Largest `γ` with `γ u(j) ≤ K(i, j) ≤ u(j) / γ` for some reference weights
/// `u`: `min_j √(min_i K(i,j) / max_i K(i,j))`.
pub fn mixing_constant(transition: &DMatrix<f64>) -> Result<f64> {
    if transition.is_empty() {
        return Err(Error::InvalidInput("empty transition matrix".into()));
    }
    if let Some(v) = transition.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NotMixing(format!("transition matrix has entry {v}")));
    }
    let mut gamma: f64 = 1.0;
    for col in transition.column_iter() {
        gamma = gamma.min((col.min() / col.max()).sqrt());
    }
    Ok(gamma.min(1.0))
}

/// `K̂(i, j) = 1_C(j) K(i, j) / K(i, C)`. Rows with no mass in `C` are only
/// an error when `i ∈ C`.
pub fn truncated_kernel(transition: &DMatrix<f64>, set: &[bool]) -> Result<DMatrix<f64>> {
    let s = transition.nrows();
    if set.len() != s || transition.ncols() != s {
        return Err(Error::Dimension { context: "truncated kernel", expected: s, got: set.len() });
    }
    let mut out = DMatrix::zeros(s, s);
    for i in 0..s {
        let mass: f64 = (0..s).filter(|&j| set[j]).map(|j| transition[(i, j)]).sum();
        if mass > 0.0 {
            for j in (0..s).filter(|&j| set[j]) {
                out[(i, j)] = transition[(i, j)] / mass;
            }
        } else if set[i] {
            return Err(Error::DegenerateConstraint(mass));
        }
    }
    Ok(out)
}

/// `γ̄² / ‖k‖²_∞` with `γ̄ = min_{i,j ∈ C} K(i, j)` and `‖k‖_∞ = max K`.
pub fn truncated_mixing_constant(transition: &DMatrix<f64>, set: &[bool]) -> Result<f64> {
    let s = transition.nrows();
    if set.len() != s {
        return Err(Error::Dimension { context: "truncated mixing constant", expected: s, got: set.len() });
    }
    let idx: Vec<usize> = (0..s).filter(|&i| set[i]).collect();
    if idx.is_empty() {
        return Err(Error::DegenerateConstraint(0.0));
    }
    let lower = idx
        .iter()
        .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
        .map(|(i, j)| transition[(i, j)])
        .fold(f64::INFINITY, f64::min);
    if !(lower > 0.0) {
        return Err(Error::NotMixing(format!("truncated kernel has entry {lower}")));
    }
    let sup = transition.max();
    Ok((lower / sup).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionPoint {
    pub n: usize,
    pub tv: f64,
    /// `TV(Φ_{0:n}μ, Φ_{0:n}η) / TV(μ, η)`; zero when `μ = η`.
    pub ratio: f64,
    /// `(1 − γ²)^n / γ²`.
    pub bound: f64,
}

/// Ratios of filter distances from two priors against the contraction bound
/// for `n = 0, …, n_max`, with `γ` from [`mixing_constant`].
pub fn contraction_profile(
    ssm: &DiscreteSsm,
    mu: &DVector<f64>,
    eta: &DVector<f64>,
    n_max: usize,
) -> Result<Vec<ContractionPoint>> {
    let gamma = mixing_constant(ssm.transition())?;
    contraction_profile_with(ssm.transition(), ssm.likelihoods(), mu, eta, n_max, gamma)
}

/// As [`contraction_profile`] for an arbitrary kernel and constant `γ`.
pub fn contraction_profile_with(
    transition: &DMatrix<f64>,
    likelihoods: &[DVector<f64>],
    mu: &DVector<f64>,
    eta: &DVector<f64>,
    n_max: usize,
    gamma: f64,
) -> Result<Vec<ContractionPoint>> {
    if n_max > likelihoods.len() {
        return Err(Error::InvalidInput(format!(
            "n_max = {n_max} exceeds the {} available likelihoods",
            likelihoods.len()
        )));
    }
    let initial = tv_distance(mu, eta);
    let g2 = gamma * gamma;
    let mut p = mu.clone();
    let mut q = eta.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            p = exact_discrete_filter_step(&p, transition, &likelihoods[n - 1])?.0;
            q = exact_discrete_filter_step(&q, transition, &likelihoods[n - 1])?.0;
        }
        let tv = tv_distance(&p, &q);
        out.push(ContractionPoint {
            n,
            tv,
            ratio: if initial > 0.0 { tv / initial } else { 0.0 },
            bound: (1.0 - g2).powi(n as i32) / g2,
        });
    }
    Ok(out)
}
