use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::DiscreteSsm;

/// Prediction-update on a finite space: `ξ = Kᵀ p`, posterior `∝ g ∘ ξ`.
/// Returns the posterior and the normaliser `Σ_k g_k ξ_k`.
pub fn exact_discrete_filter_step(
    prior: &DVector<f64>,
    transition: &DMatrix<f64>,
    g: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let s = prior.len();
    if transition.shape() != (s, s) || g.len() != s {
        return Err(Error::Dimension { context: "discrete filter step", expected: s, got: g.len() });
    }
    let predicted = transition.tr_mul(prior);
    let unnormalized = predicted.component_mul(g);
    let z = unnormalized.sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Numerical(format!("prediction-update normaliser is {z}")));
    }
    Ok((unnormalized / z, z))
}

/// Filter marginals `π_0, π_1, …, π_M` of a finite-state model.
pub fn exact_discrete_filter(ssm: &DiscreteSsm) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(ssm.steps() + 1);
    out.push(ssm.prior().clone());
    for n in 1..=ssm.steps() {
        let (post, _) = exact_discrete_filter_step(&out[n - 1], ssm.transition(), ssm.likelihood(n))
            .map_err(|e| e.at_step(n))?;
        out.push(post);
    }
    Ok(out)
}
