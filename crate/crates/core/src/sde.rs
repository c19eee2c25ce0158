//! Euler–Maruyama time stepping for Itô SDEs `dX = a(X,t) dt + s(X,t) dW`.
//!
//! A draw from the approximate transition kernel over an observation interval
//! is `J = (t_end - t_start) / h` Euler–Maruyama substeps. Times are carried as
//! integer step counts plus a step size so `t_n = t_0 + n h_o` never
//! accumulates rounding drift.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;

/// States with `|x|_inf` above this are treated as diverged.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Relative tolerance when checking that `h` divides an interval.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Drift/diffusion pair of an Itô SDE.
///
/// The slice methods are the hot path used by the integrator; `drift` and
/// `diffusion` are convenience wrappers returning owned values.
pub trait SdeModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    /// Writes `a(x, t)` into `out`.
    fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// The `d_x × d_w` diffusion matrix `s(x, t)`.
    fn diffusion(&self, x: &StateVector, t: f64) -> DMatrix<f64>;

    /// Adds `s(x, t) · dw` to `out`. Override for structured diffusions.
    fn add_diffusion(&self, x: &[f64], t: f64, dw: &[f64], out: &mut [f64]) {
        let s = self.diffusion(&DVector::from_column_slice(x), t);
        let inc = s * DVector::from_column_slice(dw);
        for (o, v) in out.iter_mut().zip(inc.iter()) {
            *o += v;
        }
    }

    fn drift(&self, x: &StateVector, t: f64) -> StateVector {
        let mut out = DVector::zeros(self.state_dim());
        self.drift_into(x.as_slice(), t, out.as_mut_slice());
        out
    }
}

impl<M: SdeModel + ?Sized> SdeModel for std::sync::Arc<M> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).drift_into(x, t, out)
    }
    fn diffusion(&self, x: &StateVector, t: f64) -> DMatrix<f64> {
        (**self).diffusion(x, t)
    }
    fn add_diffusion(&self, x: &[f64], t: f64, dw: &[f64], out: &mut [f64]) {
        (**self).add_diffusion(x, t, dw, out)
    }
}

/// Observation-time grid `t_n = t_0 + n h_o`, `n = 0..=M`, with `J = h_o / h`
/// Euler substeps per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    obs_interval: f64,
    substep: f64,
    substeps: usize,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, obs_interval: f64, substep: f64, steps: usize) -> Result<Self> {
        if !(obs_interval > 0.0 && obs_interval.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "observation interval must be positive, got {obs_interval}"
            )));
        }
        let substeps = substep_count(obs_interval, substep)?;
        Ok(Self {
            t0,
            obs_interval,
            substep,
            substeps,
            steps,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn obs_interval(&self) -> f64 {
        self.obs_interval
    }
    pub fn substep(&self) -> f64 {
        self.substep
    }
    /// `J`, the number of Euler substeps per observation interval.
    pub fn substeps(&self) -> usize {
        self.substeps
    }
    /// `M`, the number of observation times after `t_0`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.obs_interval
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

/// Returns `J = span / h`, rejecting step sizes that do not divide the span.
pub fn substep_count(span: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("substep must be positive, got {h}")));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::InvalidConfig(format!("interval must be positive, got {span}")));
    }
    let ratio = span / h;
    let j = ratio.round();
    if j < 1.0 || ((j * h - span) / span).abs() > GRID_TOLERANCE {
        return Err(Error::InvalidConfig(format!(
            "substep {h} does not divide interval {span}"
        )));
    }
    Ok(j as usize)
}

fn check_state(x: &[f64], t: f64) -> Result<()> {
    let norm = x.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    if norm.is_finite() && norm <= BLOWUP_THRESHOLD {
        Ok(())
    } else {
        Err(Error::IntegrationBlowup { time: t, norm })
    }
}

/// One Euler–Maruyama step `x + h a(x,t) + sqrt(h) s(x,t) z` for a given
/// standard-normal vector `z`.
pub fn euler_maruyama_step<M: SdeModel + ?Sized>(
    model: &M,
    x: &StateVector,
    t: f64,
    h: f64,
    z: &[f64],
) -> Result<StateVector> {
    if x.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "euler_maruyama_step state",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if z.len() != model.noise_dim() {
        return Err(Error::Dimension {
            context: "euler_maruyama_step noise",
            expected: model.noise_dim(),
            got: z.len(),
        });
    }
    let mut out = x.clone();
    let mut scratch = Scratch::new(model);
    let dw: Vec<f64> = z.iter().map(|v| v * h.sqrt()).collect();
    step_in_place(model, out.as_mut_slice(), t, h, &dw, &mut scratch.drift);
    check_state(out.as_slice(), t + h)?;
    Ok(out)
}

struct Scratch {
    drift: Vec<f64>,
    dw: Vec<f64>,
}

impl Scratch {
    fn new<M: SdeModel + ?Sized>(model: &M) -> Self {
        Self {
            drift: vec![0.0; model.state_dim()],
            dw: vec![0.0; model.noise_dim()],
        }
    }
}

#[inline]
fn step_in_place<M: SdeModel + ?Sized>(
    model: &M,
    x: &mut [f64],
    t: f64,
    h: f64,
    dw: &[f64],
    drift: &mut [f64],
) {
    model.drift_into(x, t, drift);
    // diffusion is evaluated at the pre-step state
    for (d, xi) in drift.iter_mut().zip(x.iter()) {
        *d = *xi + h * *d;
    }
    model.add_diffusion(x, t, dw, drift);
    x.copy_from_slice(drift);
}

/// Runs `substeps` Euler–Maruyama steps of size `h` from `x` starting at
/// `t_start`, drawing the Brownian increments from `rng`.
pub fn integrate<M: SdeModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &mut StateVector,
    t_start: f64,
    h: f64,
    substeps: usize,
    rng: &mut R,
) -> Result<()> {
    let mut scratch = Scratch::new(model);
    let sqrt_h = h.sqrt();
    for j in 0..substeps {
        let t = t_start + j as f64 * h;
        for w in scratch.dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sqrt_h * z;
        }
        step_in_place(model, x.as_mut_slice(), t, h, &scratch.dw, &mut scratch.drift);
        check_state(x.as_slice(), t + h)?;
    }
    Ok(())
}

/// Runs the substeps with all Brownian increments set to zero.
pub fn integrate_deterministic<M: SdeModel + ?Sized>(
    model: &M,
    x: &mut StateVector,
    t_start: f64,
    h: f64,
    substeps: usize,
) -> Result<()> {
    let mut scratch = Scratch::new(model);
    for j in 0..substeps {
        let t = t_start + j as f64 * h;
        step_in_place(model, x.as_mut_slice(), t, h, &scratch.dw, &mut scratch.drift);
        check_state(x.as_slice(), t + h)?;
    }
    Ok(())
}

/// One draw from the Euler–Maruyama kernel `K^h(x_prev, ·)` over
/// `[t_start, t_end]`.
pub fn sample_kernel<M: SdeModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x_prev: &StateVector,
    t_start: f64,
    t_end: f64,
    h: f64,
    rng: &mut R,
) -> Result<StateVector> {
    if !(t_end > t_start) {
        return Err(Error::InvalidInput(format!(
            "kernel interval must be increasing: [{t_start}, {t_end}]"
        )));
    }
    if x_prev.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "sample_kernel state",
            expected: model.state_dim(),
            got: x_prev.len(),
        });
    }
    let j = substep_count(t_end - t_start, h)?;
    let mut x = x_prev.clone();
    integrate(model, &mut x, t_start, h, j, rng)?;
    Ok(x)
}

/// Samples `(X_0, …, X_M)` at the grid's observation times from one
/// continuous random stream.
pub fn simulate_ground_truth<M: SdeModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x0: &StateVector,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<StateVector>> {
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "simulate_ground_truth x0",
            expected: model.state_dim(),
            got: x0.len(),
        });
    }
    check_state(x0.as_slice(), grid.t0())?;
    let mut path = Vec::with_capacity(grid.steps() + 1);
    path.push(x0.clone());
    let mut x = x0.clone();
    for n in 1..=grid.steps() {
        integrate(model, &mut x, grid.time(n - 1), grid.substep(), grid.substeps(), rng)
            .map_err(|e| e.at_step(n))?;
        path.push(x.clone());
    }
    Ok(path)
}
