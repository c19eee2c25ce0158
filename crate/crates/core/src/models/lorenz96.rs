use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sde::{SdeModel, StateVector};

/// Parameters of the stochastic Lorenz 96 model with additive noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96Params {
    pub dim: usize,
    pub forcing: f64,
    pub sigma_x: f64,
}

impl Lorenz96Params {
    /// Forcing `F = 8` and diffusion scale `sqrt(1/2)`.
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            forcing: 8.0,
            sigma_x: 0.5f64.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 {
            return Err(Error::InvalidConfig(format!(
                "lorenz96 needs d_x >= 4, got {}",
                self.dim
            )));
        }
        if !self.forcing.is_finite() {
            return Err(Error::InvalidConfig("lorenz96 forcing must be finite".into()));
        }
        if !(self.sigma_x >= 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lorenz96 sigma_x must be >= 0, got {}",
                self.sigma_x
            )));
        }
        Ok(())
    }
}

/// `a_i(x) = x_{i-1}(x_{i+1} - x_{i-2}) - x_i + F`, indices cyclic mod `d_x`.
pub fn lorenz96_drift_into(x: &[f64], forcing: f64, out: &mut [f64]) {
    let d = x.len();
    debug_assert!(d >= 4);
    // wrap-around entries first, then the branch-free interior
    for i in [0, 1, d - 1] {
        let im2 = (i + d - 2) % d;
        let im1 = (i + d - 1) % d;
        let ip1 = (i + 1) % d;
        out[i] = x[im1] * (x[ip1] - x[im2]) - x[i] + forcing;
    }
    for i in 2..d - 1 {
        out[i] = x[i - 1] * (x[i + 1] - x[i - 2]) - x[i] + forcing;
    }
}

pub fn lorenz96_drift(x: &StateVector, forcing: f64) -> Result<StateVector> {
    if x.len() < 4 {
        return Err(Error::Dimension {
            context: "lorenz96_drift needs d_x >= 4",
            expected: 4,
            got: x.len(),
        });
    }
    let mut out = StateVector::zeros(x.len());
    lorenz96_drift_into(x.as_slice(), forcing, out.as_mut_slice());
    Ok(out)
}

/// Stochastic Lorenz 96 with diffusion `sigma_x · I`.
#[derive(Debug, Clone)]
pub struct Lorenz96 {
    params: Lorenz96Params,
}

impl Lorenz96 {
    pub fn new(params: Lorenz96Params) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &Lorenz96Params {
        &self.params
    }
}

pub fn lorenz96_model(params: Lorenz96Params) -> Result<Lorenz96> {
    Lorenz96::new(params)
}

impl SdeModel for Lorenz96 {
    fn state_dim(&self) -> usize {
        self.params.dim
    }

    fn noise_dim(&self) -> usize {
        self.params.dim
    }

    fn drift_into(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        lorenz96_drift_into(x, self.params.forcing, out);
    }

    fn diffusion(&self, _x: &StateVector, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.params.dim, self.params.dim) * self.params.sigma_x
    }

    fn add_diffusion(&self, _x: &[f64], _t: f64, dw: &[f64], out: &mut [f64]) {
        let s = self.params.sigma_x;
        for (o, w) in out.iter_mut().zip(dw) {
            *o += s * w;
        }
    }
}
