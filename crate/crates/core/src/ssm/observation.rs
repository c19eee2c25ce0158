use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sde::StateVector;

/// Linear-Gaussian observation `Y = Hᵀ X + U`, `U ~ N(0, Σ_u)`.
///
/// The Cholesky factor and precision of `Σ_u` are computed once at
/// construction. An isotropic covariance `σ² I` skips the dense solves.
#[derive(Debug, Clone)]
pub struct GaussianObservation {
    /// `Hᵀ`, `d_y × d_x`.
    obs: DMatrix<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    isotropic: Option<f64>,
}

impl GaussianObservation {
    /// `obs` is `Hᵀ` (`d_y × d_x`) and `cov` is `Σ_u` (`d_y × d_y`).
    pub fn new(obs: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d_y = obs.nrows();
        if d_y == 0 || obs.ncols() == 0 {
            return Err(Error::InvalidInput("empty observation matrix".into()));
        }
        if cov.shape() != (d_y, d_y) {
            return Err(Error::Dimension {
                context: "observation covariance",
                expected: d_y,
                got: cov.nrows(),
            });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidInput("observation covariance must be symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("observation covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let diag = cov[(0, 0)];
        let isotropic = (cov == DMatrix::identity(d_y, d_y) * diag).then_some(diag);
        Ok(Self {
            obs,
            cov,
            chol,
            precision,
            isotropic,
        })
    }

    /// `Y = Hᵀ X + N(0, σ_y² I)` with `h` given as `d_x × d_y`.
    pub fn isotropic(h: &DMatrix<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "observation variance must be > 0, got {variance}"
            )));
        }
        let d_y = h.ncols();
        Self::new(h.transpose(), DMatrix::identity(d_y, d_y) * variance)
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.obs.ncols()
    }

    /// `Hᵀ` (`d_y × d_x`).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.obs
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn predict(&self, x: &[f64]) -> DVector<f64> {
        &self.obs * DVectorView::from_slice(x, x.len())
    }

    /// `y - m(x)`.
    pub fn residual(&self, y: &DVector<f64>, x: &[f64]) -> DVector<f64> {
        let mut r = y.clone();
        r.gemv(-1.0, &self.obs, &DVectorView::from_slice(x, x.len()), 1.0);
        r
    }

    /// `Σ_u^{-1} r`.
    pub fn whiten(&self, r: &DVector<f64>) -> DVector<f64> {
        match self.isotropic {
            Some(v) => r / v,
            None => &self.precision * r,
        }
    }

    /// `-½ ‖y - m(x)‖²_{Σ_u^{-1}}` from a precomputed residual.
    pub fn log_likelihood_from_residual(&self, r: &DVector<f64>) -> f64 {
        match self.isotropic {
            Some(v) => -0.5 * r.norm_squared() / v,
            None => -0.5 * self.chol.l().solve_lower_triangular(r).map_or(f64::NAN, |z| z.norm_squared()),
        }
    }

    /// `∇_x log g(x) = H Σ_u^{-1} (y - Hᵀ x)`.
    pub fn grad_log_likelihood(&self, y: &DVector<f64>, x: &[f64]) -> DVector<f64> {
        let w = self.whiten(&self.residual(y, x));
        self.obs.tr_mul(&w)
    }

    /// Draws `Hᵀ x + U`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &StateVector, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.obs_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.predict(x.as_slice()) + self.chol.l() * z
    }
}

/// Unnormalised Gaussian log-likelihood `-½ ‖y - m(x)‖²_{Σ_u^{-1}}`; its
/// maximum is 0 at `y = m(x)`.
pub fn gaussian_log_likelihood(obs: &GaussianObservation, y: &DVector<f64>, x: &StateVector) -> Result<f64> {
    if y.len() != obs.obs_dim() {
        return Err(Error::Dimension { context: "observation", expected: obs.obs_dim(), got: y.len() });
    }
    if x.len() != obs.state_dim() {
        return Err(Error::Dimension { context: "state", expected: obs.state_dim(), got: x.len() });
    }
    Ok(obs.log_likelihood_from_residual(&obs.residual(y, x.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn maximum_is_zero() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let obs = GaussianObservation::isotropic(&h, 0.5).unwrap();
        let x = dvector![1.0, 2.0, 3.0];
        let y = obs.predict(x.as_slice());
        assert_eq!(gaussian_log_likelihood(&obs, &y, &x).unwrap(), 0.0);
    }

    #[test]
    fn scalar_value() {
        let obs = GaussianObservation::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)).unwrap();
        let ll = gaussian_log_likelihood(&obs, &dvector![1.0], &dvector![0.0]).unwrap();
        assert_abs_diff_eq!(ll, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn full_covariance_matches_isotropic_path() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 1.0]);
        let iso = GaussianObservation::isotropic(&h, 0.5).unwrap();
        let mut cov = DMatrix::identity(2, 2) * 0.5;
        cov[(0, 1)] = 1e-300; // defeats the isotropic shortcut without changing values
        cov[(1, 0)] = 1e-300;
        let full = GaussianObservation::new(h.transpose(), cov).unwrap();
        let (y, x) = (dvector![0.3, -1.2], dvector![2.0, 1.0]);
        assert_abs_diff_eq!(
            gaussian_log_likelihood(&iso, &y, &x).unwrap(),
            gaussian_log_likelihood(&full, &y, &x).unwrap(),
            epsilon = 1e-12
        );
        assert!((iso.grad_log_likelihood(&y, x.as_slice()) - full.grad_log_likelihood(&y, x.as_slice())).amax() < 1e-12);
    }

    #[test]
    fn rejects_singular_covariance() {
        let h = DMatrix::identity(2, 2);
        assert!(GaussianObservation::new(h.clone(), DMatrix::zeros(2, 2)).is_err());
        assert!(GaussianObservation::isotropic(&h, 0.0).is_err());
        let obs = GaussianObservation::isotropic(&h, 1.0).unwrap();
        assert!(gaussian_log_likelihood(&obs, &dvector![1.0], &dvector![1.0, 2.0]).is_err());
    }
}
