use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sde::{SdeModel, StateVector};
use crate::ssm::GaussianObservation;

/// Parameters of the barrier drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    /// Strength `β`.
    pub strength: f64,
    /// Margin `δ`: the push starts once `log g < threshold + δ`.
    pub margin: f64,
    /// Ramp exponent `q` of `w(t) = ((t - t_{n-1}) / (t_n - t_{n-1}))^q`.
    pub ramp_exponent: f64,
}

impl BarrierConfig {
    /// `β = 2 / h_o`, `δ = 2`, `q = 1`.
    pub fn default_for_interval(obs_interval: f64) -> Self {
        Self {
            strength: 2.0 / obs_interval,
            margin: 2.0,
            ramp_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return Err(Error::InvalidConfig(format!("barrier strength must be > 0, got {}", self.strength)));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("barrier margin must be >= 0, got {}", self.margin)));
        }
        if !(self.ramp_exponent >= 1.0 && self.ramp_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "barrier ramp exponent must be >= 1, got {}",
                self.ramp_exponent
            )));
        }
        Ok(())
    }
}

/// Base drift plus `β w(t) ∇ log g(x)` whenever `log g(x) < threshold + δ`,
/// for the observation `y_n` closing the interval `[t_{n-1}, t_n]`.
///
/// Inside the softened superlevel set the drift is the base drift exactly.
#[derive(Debug, Clone)]
pub struct BarrierModel<M> {
    base: M,
    obs: Arc<GaussianObservation>,
    y: DVector<f64>,
    activation: f64,
    cfg: BarrierConfig,
    t_start: f64,
    t_end: f64,
}

pub fn barrier_drift<M: SdeModel>(
    base: M,
    obs: Arc<GaussianObservation>,
    y_next: DVector<f64>,
    threshold: f64,
    cfg: BarrierConfig,
    interval: (f64, f64),
) -> Result<BarrierModel<M>> {
    cfg.validate()?;
    let (t_start, t_end) = interval;
    if !(t_end > t_start) {
        return Err(Error::InvalidInput(format!("barrier interval must be increasing: {interval:?}")));
    }
    if obs.state_dim() != base.state_dim() {
        return Err(Error::Dimension { context: "barrier observation", expected: base.state_dim(), got: obs.state_dim() });
    }
    if y_next.len() != obs.obs_dim() {
        return Err(Error::Dimension { context: "barrier observation value", expected: obs.obs_dim(), got: y_next.len() });
    }
    Ok(BarrierModel {
        base,
        obs,
        y: y_next,
        activation: threshold + cfg.margin,
        cfg,
        t_start,
        t_end,
    })
}

impl<M> BarrierModel<M> {
    pub fn ramp(&self, t: f64) -> f64 {
        let s = ((t - self.t_start) / (self.t_end - self.t_start)).clamp(0.0, 1.0);
        if self.cfg.ramp_exponent == 1.0 {
            s
        } else {
            s.powf(self.cfg.ramp_exponent)
        }
    }
}

impl<M: SdeModel> SdeModel for BarrierModel<M> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn noise_dim(&self) -> usize {
        self.base.noise_dim()
    }

    fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.base.drift_into(x, t, out);
        let w = self.ramp(t);
        if w == 0.0 {
            return;
        }
        let r = self.obs.residual(&self.y, x);
        if self.obs.log_likelihood_from_residual(&r) >= self.activation {
            return;
        }
        let grad = self.obs.matrix().tr_mul(&self.obs.whiten(&r));
        let scale = self.cfg.strength * w;
        for (o, g) in out.iter_mut().zip(grad.iter()) {
            *o += scale * g;
        }
    }

    fn diffusion(&self, x: &StateVector, t: f64) -> DMatrix<f64> {
        self.base.diffusion(x, t)
    }

    fn add_diffusion(&self, x: &[f64], t: f64, dw: &[f64], out: &mut [f64]) {
        self.base.add_diffusion(x, t, dw, out)
    }
}
