use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sde::{substep_count, SdeModel, StateVector};

/// `dX = -theta X dt + sigma dW`, independently in each coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrnsteinUhlenbeck {
    pub theta: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl OrnsteinUhlenbeck {
    pub fn new(theta: f64, sigma: f64, dim: usize) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidConfig(format!("OU theta must be > 0, got {theta}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("OU sigma must be >= 0, got {sigma}")));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("OU dimension must be positive".into()));
        }
        Ok(Self { theta, sigma, dim })
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

impl SdeModel for OrnsteinUhlenbeck {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn drift_into(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = -self.theta * v;
        }
    }

    fn diffusion(&self, _x: &StateVector, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.sigma
    }

    fn add_diffusion(&self, _x: &[f64], _t: f64, dw: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(dw) {
            *o += self.sigma * w;
        }
    }
}

/// Gaussian scalar transition `X = decay · x' + N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuTransition {
    pub decay: f64,
    pub variance: f64,
}

/// Exact OU transition over `dt`.
pub fn ou_exact_kernel(theta: f64, sigma: f64, dt: f64) -> Result<OuTransition> {
    if !(theta > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "OU kernel needs theta > 0 and sigma >= 0, got ({theta}, {sigma})"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("OU kernel needs dt > 0, got {dt}")));
    }
    let decay = (-theta * dt).exp();
    let variance = sigma * sigma * -(-2.0 * theta * dt).exp_m1() / (2.0 * theta);
    Ok(OuTransition { decay, variance })
}

/// Transition induced by `dt / h` Euler–Maruyama steps of the OU model. It is
/// Gaussian with decay `(1 - theta h)^J` and variance
/// `sigma² h Σ_{k<J} (1 - theta h)^{2k}`.
pub fn ou_euler_kernel(theta: f64, sigma: f64, dt: f64, h: f64) -> Result<OuTransition> {
    let j = substep_count(dt, h)?;
    let r = 1.0 - theta * h;
    let decay = r.powi(j as i32);
    let r2 = r * r;
    let geometric = if (1.0 - r2).abs() < 1e-300 {
        j as f64
    } else {
        (1.0 - r2.powi(j as i32)) / (1.0 - r2)
    };
    Ok(OuTransition {
        decay,
        variance: sigma * sigma * h * geometric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_values() {
        let k = ou_exact_kernel(1.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(k.decay, 0.606_530_659_712_633, epsilon = 1e-12);
        assert_abs_diff_eq!(k.variance, 0.316_060_279_414_278_8, epsilon = 1e-12);
    }

    #[test]
    fn small_and_large_dt_limits() {
        let k = ou_exact_kernel(2.0, 1.5, 1e-12).unwrap();
        assert_abs_diff_eq!(k.decay, 1.0, epsilon = 1e-10);
        assert!(k.variance < 1e-10);
        let k = ou_exact_kernel(2.0, 1.5, 1e3).unwrap();
        assert_eq!(k.decay, 0.0);
        assert_abs_diff_eq!(k.variance, 1.5 * 1.5 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ou_exact_kernel(0.0, 1.0, 1.0).is_err());
        assert!(ou_exact_kernel(1.0, 1.0, 0.0).is_err());
        assert!(OrnsteinUhlenbeck::new(-1.0, 1.0, 1).is_err());
    }

    #[test]
    fn euler_kernel_converges_to_exact() {
        let exact = ou_exact_kernel(1.0, 1.0, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for h in [0.05, 0.025, 0.0125, 0.00625] {
            let em = ou_euler_kernel(1.0, 1.0, 0.5, h).unwrap();
            let err = (em.decay - exact.decay).abs() + (em.variance - exact.variance).abs();
            assert!(err < prev);
            if h < 0.01 {
                // first order: halving h halves the error
                assert!((prev / err - 2.0).abs() < 0.1, "ratio {}", prev / err);
            }
            prev = err;
        }
        // one substep: decay 1 - theta h, variance sigma² h
        let one = ou_euler_kernel(2.0, 3.0, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(one.decay, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(one.variance, 0.9, epsilon = 1e-15);
    }
}
