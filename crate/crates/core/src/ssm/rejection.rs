use rand::RngCore;

use crate::error::{Error, Result};
use crate::kernel::PriorSampler;
use crate::sde::StateVector;
use crate::ssm::ConstraintSet;

/// Default cap on proposals per constrained draw.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// An accepted draw and the number of proposals it took.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionDraw {
    pub state: StateVector,
    pub attempts: usize,
}

/// Draws from `propose` until the sample lies in `constraint`.
///
/// Accepted draws are exact samples of the proposal law restricted to the
/// set; `1 / E[attempts]` estimates the retained mass. `origin` is only used
/// to annotate the infeasibility error.
pub fn sample_constrained_kernel_rejection<F>(
    mut propose: F,
    constraint: &ConstraintSet,
    max_attempts: usize,
    origin: &StateVector,
    rng: &mut dyn RngCore,
) -> Result<RejectionDraw>
where
    F: FnMut(&mut dyn RngCore) -> Result<StateVector>,
{
    if max_attempts == 0 {
        return Err(Error::InvalidInput("max_attempts must be >= 1".into()));
    }
    for attempts in 1..=max_attempts {
        let x = propose(rng)?;
        if constraint.contains(&x) {
            return Ok(RejectionDraw { state: x, attempts });
        }
    }
    Err(Error::ConstraintInfeasible {
        attempts: max_attempts,
        origin: origin.iter().copied().collect(),
        acceptance: 0.0,
        particle: None,
    })
}

/// Rejection draw from the prior restricted to `c0`.
pub fn sample_constrained_prior(
    prior: &dyn PriorSampler,
    c0: &ConstraintSet,
    max_attempts: usize,
    rng: &mut dyn RngCore,
) -> Result<RejectionDraw> {
    let origin = StateVector::zeros(prior.state_dim());
    sample_constrained_kernel_rejection(|r| prior.sample(r), c0, max_attempts, &origin, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{DiagonalGaussianPrior, LinearGaussianKernel, TransitionKernel};
    use crate::models::ou_exact_kernel;
    use crate::rng::{Stream, Streams};
    use crate::ssm::hypercube_constraint;
    use nalgebra::dvector;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn whole_space_accepts_first_draw_bit_identically() {
        let k = LinearGaussianKernel::from_scalar(ou_exact_kernel(1.0, 1.0, 0.5).unwrap(), 2).unwrap();
        let x0 = dvector![0.3, -0.7];
        let streams = Streams::new(3);
        for i in 0..20 {
            let plain = k.sample(1, &x0, &mut streams.get(Stream::Propagate, 1, i)).unwrap();
            let draw = sample_constrained_kernel_rejection(
                |r| k.sample(1, &x0, r),
                &ConstraintSet::Everywhere,
                5,
                &x0,
                &mut streams.get(Stream::Propagate, 1, i),
            )
            .unwrap();
            assert_eq!(draw.attempts, 1);
            assert_eq!(draw.state, plain);
        }
    }

    #[test]
    fn infeasible_constraint_errors() {
        let k = LinearGaussianKernel::from_scalar(ou_exact_kernel(1.0, 0.1, 0.5).unwrap(), 1).unwrap();
        let far = hypercube_constraint(dvector![100.0], 1.0).unwrap();
        let x0 = dvector![0.0];
        let err = sample_constrained_kernel_rejection(
            |r| k.sample(1, &x0, r),
            &far,
            50,
            &x0,
            &mut Streams::new(1).get(Stream::Propagate, 0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConstraintInfeasible { attempts: 50, .. }));
        assert!(sample_constrained_kernel_rejection(|r| k.sample(1, &x0, r), &far, 0, &x0, &mut Streams::new(1).get(Stream::Propagate, 0, 0)).is_err());
    }

    #[test]
    fn constrained_prior_postcondition_and_acceptance() {
        let sigma = 0.5f64.sqrt();
        let prior = DiagonalGaussianPrior::isotropic(dvector![0.0], sigma);
        let cube = hypercube_constraint(dvector![0.0], 3.0 * sigma).unwrap();
        let mut rng = Streams::new(8).get(Stream::Prior, 0, 0);
        let n = 20_000;
        let mut total = 0usize;
        for _ in 0..n {
            let d = sample_constrained_prior(&prior, &cube, DEFAULT_MAX_ATTEMPTS, &mut rng).unwrap();
            assert!(cube.contains(&d.state));
            total += d.attempts;
        }
        // acceptance P(|Z| <= 1.5)
        let p = 2.0 * Normal::standard().cdf(1.5) - 1.0;
        let rate = n as f64 / total as f64;
        // attempts are geometric(p): sd of the mean is sqrt(1-p)/p/sqrt(n)
        let se_mean = (1.0 - p).sqrt() / p / (n as f64).sqrt();
        assert!((total as f64 / n as f64 - 1.0 / p).abs() < 3.0 * se_mean, "rate {rate} vs {p}");

        let plain = sample_constrained_prior(&prior, &ConstraintSet::Everywhere, 1, &mut rng).unwrap();
        assert_eq!(plain.attempts, 1);
    }
}
