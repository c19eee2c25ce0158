use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::LinearGaussianSsm;

/// Gaussian filter marginal `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanState {
    pub fn prior(ssm: &LinearGaussianSsm) -> Self {
        Self { mean: ssm.prior_mean.clone(), cov: ssm.prior_cov.clone() }
    }

    /// Predict through `(A, Q)` without an update.
    pub fn predict(&self, ssm: &LinearGaussianSsm) -> Self {
        let a = &ssm.transition;
        let cov = a * &self.cov * a.transpose() + &ssm.transition_cov;
        Self { mean: a * &self.mean, cov: symmetrize(cov) }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Predict then update with `y`, Joseph-form covariance.
pub fn kalman_step(state: &KalmanState, ssm: &LinearGaussianSsm, y: &DVector<f64>) -> Result<KalmanState> {
    if y.len() != ssm.obs.nrows() {
        return Err(Error::Dimension { context: "kalman observation", expected: ssm.obs.nrows(), got: y.len() });
    }
    if state.mean.len() != ssm.transition.nrows() {
        return Err(Error::Dimension { context: "kalman state", expected: ssm.transition.nrows(), got: state.mean.len() });
    }
    let pred = state.predict(ssm);
    let h = &ssm.obs;
    let s = symmetrize(h * &pred.cov * h.transpose() + &ssm.obs_cov);
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    // K = P Hᵀ S⁻¹  ⇔  S Kᵀ = H P
    let gain = chol.solve(&(h * &pred.cov)).transpose();
    let innovation = y - h * &pred.mean;
    let mean = &pred.mean + &gain * innovation;
    let i_kh = DMatrix::identity(mean.len(), mean.len()) - &gain * h;
    let cov = &i_kh * &pred.cov * i_kh.transpose() + &gain * &ssm.obs_cov * gain.transpose();
    Ok(KalmanState { mean, cov: symmetrize(cov) })
}

/// Filter marginals `π_1, …, π_M`.
pub fn kalman_filter(ssm: &LinearGaussianSsm, ys: &[DVector<f64>]) -> Result<Vec<KalmanState>> {
    let mut state = KalmanState::prior(ssm);
    let mut out = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        state = kalman_step(&state, ssm, y).map_err(|e| e.at_step(k + 1))?;
        out.push(state.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;

    #[test]
    fn scalar_hand_computation() {
        let ssm = LinearGaussianSsm::scalar(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let pred = KalmanState::prior(&ssm).predict(&ssm);
        assert_eq!((pred.mean[0], pred.cov[(0, 0)]), (0.0, 2.0));
        let post = kalman_step(&KalmanState::prior(&ssm), &ssm, &dvector![2.0]).unwrap();
        assert_abs_diff_eq!(post.mean[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(post.cov[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn uninformative_observation_only_predicts() {
        let ssm = LinearGaussianSsm::new(
            dmatrix![0.5, 0.1; 0.0, 0.9],
            DMatrix::zeros(2, 2),
            dmatrix![1.0, 0.0],
            dmatrix![1e30],
            dvector![1.0, -2.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let post = kalman_step(&KalmanState::prior(&ssm), &ssm, &dvector![100.0]).unwrap();
        let expected = &ssm.transition * &ssm.prior_mean;
        assert!((post.mean - expected).amax() < 1e-12);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        use rand::SeedableRng;
        let d = 4;
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = &b * b.transpose() * 0.1;
        let h = DMatrix::from_fn(2, d, |_, _| rng.random_range(-1.0..1.0));
        let ssm = LinearGaussianSsm::new(a, q, h, DMatrix::identity(2, 2) * 0.01, DVector::zeros(d), DMatrix::identity(d, d)).unwrap();
        let mut state = KalmanState::prior(&ssm);
        for _ in 0..1000 {
            let y = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            state = kalman_step(&state, &ssm, &y).unwrap();
            assert!((&state.cov - state.cov.transpose()).amax() <= 1e-10);
            let min = state.cov.clone().symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-10);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ssm = LinearGaussianSsm::scalar(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(kalman_step(&KalmanState::prior(&ssm), &ssm, &dvector![1.0, 2.0]).is_err());
    }
}
