use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `X_n = A X_{n-1} + N(0, Q)`, `Y_n = Hᵀ X_n + N(0, R)`, `X_0 ~ N(m_0, P_0)`.
///
/// `obs` stores `Hᵀ` (`d_y × d_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSsm {
    pub transition: DMatrix<f64>,
    pub transition_cov: DMatrix<f64>,
    pub obs: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-10 * scale
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .all(|l| *l >= -1e-10 * scale)
}

impl LinearGaussianSsm {
    pub fn new(
        transition: DMatrix<f64>,
        transition_cov: DMatrix<f64>,
        obs: DMatrix<f64>,
        obs_cov: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = transition.nrows();
        let m = obs.nrows();
        let square = |mat: &DMatrix<f64>, k: usize, name: &'static str| {
            if mat.shape() != (k, k) {
                Err(Error::Dimension { context: name, expected: k, got: mat.nrows() })
            } else {
                Ok(())
            }
        };
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("empty state or observation space".into()));
        }
        square(&transition, n, "transition matrix")?;
        square(&transition_cov, n, "transition covariance")?;
        square(&prior_cov, n, "prior covariance")?;
        square(&obs_cov, m, "observation covariance")?;
        if obs.ncols() != n {
            return Err(Error::Dimension { context: "observation matrix columns", expected: n, got: obs.ncols() });
        }
        if prior_mean.len() != n {
            return Err(Error::Dimension { context: "prior mean", expected: n, got: prior_mean.len() });
        }
        for (mat, name) in [(&transition_cov, "Q"), (&prior_cov, "P0"), (&obs_cov, "R")] {
            if !is_symmetric(mat) || !is_psd(mat) {
                return Err(Error::InvalidInput(format!("{name} must be symmetric PSD")));
            }
        }
        if obs_cov.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("R must be positive definite".into()));
        }
        Ok(Self { transition, transition_cov, obs, obs_cov, prior_mean, prior_cov })
    }

    /// Scalar model `x_n = a x_{n-1} + N(0, q)`, `y_n = x_n + N(0, r)`.
    pub fn scalar(a: f64, q: f64, r: f64, m0: f64, p0: f64) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(one(a), one(q), one(1.0), one(r), DVector::from_element(1, m0), one(p0))
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.nrows()
    }
}
