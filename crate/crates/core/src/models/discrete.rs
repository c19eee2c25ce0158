use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on row sums and simplex sums.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Finite-state model: row-stochastic transition `K`, per-step strictly
/// positive likelihood vectors `g_n` (`n = 1..=M`) and a prior pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSsm {
    transition: DMatrix<f64>,
    likelihoods: Vec<DVector<f64>>,
    prior: DVector<f64>,
}

pub(crate) fn check_simplex(p: &DVector<f64>, what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has negative or non-finite entries")));
    }
    if (p.sum() - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(Error::InvalidInput(format!("{what} sums to {} not 1", p.sum())));
    }
    Ok(())
}

impl DiscreteSsm {
    pub fn new(
        transition: DMatrix<f64>,
        likelihoods: Vec<DVector<f64>>,
        prior: DVector<f64>,
    ) -> Result<Self> {
        let s = transition.nrows();
        if s == 0 || transition.ncols() != s {
            return Err(Error::InvalidInput("transition matrix must be square and non-empty".into()));
        }
        for (i, row) in transition.row_iter().enumerate() {
            check_simplex(&row.transpose(), &format!("transition row {i}"))?;
        }
        if prior.len() != s {
            return Err(Error::Dimension { context: "discrete prior", expected: s, got: prior.len() });
        }
        check_simplex(&prior, "prior")?;
        for (n, g) in likelihoods.iter().enumerate() {
            if g.len() != s {
                return Err(Error::Dimension { context: "likelihood vector", expected: s, got: g.len() });
            }
            if g.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(format!("likelihood g_{} must be > 0", n + 1)));
            }
        }
        Ok(Self { transition, likelihoods, prior })
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn steps(&self) -> usize {
        self.likelihoods.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// `g_n` for `n = 1..=M`.
    pub fn likelihood(&self, n: usize) -> &DVector<f64> {
        &self.likelihoods[n - 1]
    }

    pub fn likelihoods(&self) -> &[DVector<f64>] {
        &self.likelihoods
    }

    pub fn prior(&self) -> &DVector<f64> {
        &self.prior
    }

    pub fn with_prior(&self, prior: DVector<f64>) -> Result<Self> {
        Self::new(self.transition.clone(), self.likelihoods.clone(), prior)
    }
}

/// Random fixture whose kernel satisfies `min_i K(i,j) / max_i K(i,j) >= gamma²`
/// for every column `j`.
///
/// Entries are drawn uniformly in `[1, 1/gamma]` and rows normalised, which
/// bounds each column ratio below by `gamma²`. A target of exactly 1 is
/// clamped to `1 - 1e-6`.
pub fn mixing_discrete_ssm<R: Rng + ?Sized>(
    states: usize,
    steps: usize,
    gamma_target: f64,
    rng: &mut R,
) -> Result<DiscreteSsm> {
    if states < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 states, got {states}")));
    }
    if !(gamma_target > 0.0 && gamma_target <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "mixing target must lie in (0, 1), got {gamma_target}"
        )));
    }
    let gamma = gamma_target.min(1.0 - 1e-6);
    let spread = 1.0 / gamma;
    let mut k = DMatrix::from_fn(states, states, |_, _| rng.random_range(1.0..spread));
    for mut row in k.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    let likelihoods = (0..steps)
        .map(|_| DVector::from_fn(states, |_, _| rng.random_range(0.05..1.0)))
        .collect();
    let mut prior = DVector::from_fn(states, |_, _| rng.random_range(0.05..1.0));
    prior /= prior.sum();
    let ssm = DiscreteSsm::new(k, likelihoods, prior)?;
    let achieved = crate::analysis::mixing_constant(ssm.transition())?;
    if achieved < gamma * (1.0 - 1e-12) {
        return Err(Error::NotMixing(format!(
            "constructed kernel has gamma {achieved} below target {gamma}"
        )));
    }
    Ok(ssm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mixing_constant;
    use crate::rng::{Stream, Streams};

    #[test]
    fn fixtures_meet_target_and_are_stochastic() {
        for seed in 0..50u64 {
            let mut rng = Streams::new(seed).get(Stream::Fixture, 0, 0);
            let target = 0.3 + 0.6 * (seed as f64 / 50.0);
            let ssm = mixing_discrete_ssm(2 + (seed as usize % 9), 5, target, &mut rng).unwrap();
            for row in ssm.transition().row_iter() {
                assert!((row.sum() - 1.0).abs() <= STOCHASTIC_TOLERANCE);
            }
            assert!(mixing_constant(ssm.transition()).unwrap() >= target - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_targets_and_inputs() {
        let mut rng = Streams::new(0).get(Stream::Fixture, 0, 0);
        assert!(mixing_discrete_ssm(3, 1, 0.0, &mut rng).is_err());
        assert!(mixing_discrete_ssm(3, 1, 1.5, &mut rng).is_err());
        assert!(mixing_discrete_ssm(1, 1, 0.5, &mut rng).is_err());
        // gamma = 1 is clamped rather than rejected
        assert!(mixing_discrete_ssm(3, 1, 1.0, &mut rng).is_ok());

        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        let p = DVector::from_vec(vec![0.5, 0.5]);
        assert!(DiscreteSsm::new(k, vec![], p.clone()).is_err());
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(DiscreteSsm::new(k.clone(), vec![DVector::from_vec(vec![1.0, 0.0])], p.clone()).is_err());
        assert!(DiscreteSsm::new(k, vec![], DVector::from_vec(vec![0.7, 0.7])).is_err());
    }
}
