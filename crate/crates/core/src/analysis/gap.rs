use nalgebra::DVector;

use super::metrics::tv_distance;
use super::stability::truncated_kernel;
use crate::error::{Error, Result};
use crate::filters::{exact_discrete_filter, exact_discrete_filter_step};
use crate::models::DiscreteSsm;

/// Exact distance between the filter and its constrained approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGap {
    /// `ε^l`: the smaller of `π_0(C^l)` and `min_{i ∈ C^l} K(i, C^l)`.
    pub epsilon: Vec<f64>,
    /// `sup_{|f| ≤ 1} |π_n(f) − π̂_n^l(f)| = 2 TV(π_n, π̂_n^l)` at the final
    /// step.
    pub gap: Vec<f64>,
}

/// Filter marginals `π̂_0, …, π̂_M` of the model truncated to the
/// time-invariant set `C`.
pub fn constrained_discrete_filter(ssm: &DiscreteSsm, set: &[bool]) -> Result<Vec<DVector<f64>>> {
    let kh = truncated_kernel(ssm.transition(), set)?;
    let p0 = DVector::from_fn(ssm.states(), |i, _| if set[i] { ssm.prior()[i] } else { 0.0 });
    let mass = p0.sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateConstraint(mass));
    }
    let mut out = vec![p0 / mass];
    for n in 1..=ssm.steps() {
        let (post, _) = exact_discrete_filter_step(&out[n - 1], &kh, ssm.likelihood(n)).map_err(|e| e.at_step(n))?;
        out.push(post);
    }
    Ok(out)
}

/// Gap and `ε^l` for each set of a sequence of constraints, at the last step
/// of `ssm`.
pub fn constraint_gap_exact(ssm: &DiscreteSsm, constraints: &[Vec<bool>]) -> Result<ConstraintGap> {
    let s = ssm.states();
    let exact = exact_discrete_filter(ssm)?;
    let last = exact.last().expect("filter includes the prior");
    let mut epsilon = Vec::with_capacity(constraints.len());
    let mut gap = Vec::with_capacity(constraints.len());
    for set in constraints {
        if set.len() != s {
            return Err(Error::Dimension { context: "constraint set", expected: s, got: set.len() });
        }
        let prior_mass: f64 = (0..s).filter(|&i| set[i]).map(|i| ssm.prior()[i]).sum();
        let retained = (0..s)
            .filter(|&i| set[i])
            .map(|i| (0..s).filter(|&j| set[j]).map(|j| ssm.transition()[(i, j)]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let eps = prior_mass.min(retained);
        if !(eps > 0.0) {
            return Err(Error::DegenerateConstraint(eps.max(0.0)));
        }
        let constrained = constrained_discrete_filter(ssm, set)?;
        epsilon.push(eps.min(1.0));
        gap.push(2.0 * tv_distance(last, constrained.last().expect("non-empty")));
    }
    Ok(ConstraintGap { epsilon, gap })
}
