//! Sampling interfaces shared by the filters: priors, Markov transition
//! kernels and per-step log-likelihoods, plus the concrete kernels used in
//! this crate.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::OuTransition;
use crate::sde::{integrate, integrate_deterministic, SdeModel, StateVector, TimeGrid};
use crate::ssm::{
    barrier_drift, sample_constrained_kernel_rejection, BarrierConfig, ConstraintSet,
    GaussianObservation,
};

/// Draws `X_0`.
pub trait PriorSampler: Send + Sync {
    fn state_dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> Result<StateVector>;

    /// Draw plus the number of proposals it took.
    fn sample_counted(&self, rng: &mut dyn RngCore) -> Result<(StateVector, usize)> {
        Ok((self.sample(rng)?, 1))
    }
}

/// Markov kernel `K_n(x', ·)` for `n >= 1`.
pub trait TransitionKernel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn sample(&self, n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector>;

    /// Draw plus the number of proposals it took (1 for unconstrained kernels).
    fn sample_counted(
        &self,
        n: usize,
        x_prev: &StateVector,
        rng: &mut dyn RngCore,
    ) -> Result<(StateVector, usize)> {
        Ok((self.sample(n, x_prev, rng)?, 1))
    }

    /// A deterministic point summarising `K_n(x', ·)`, used as the auxiliary
    /// filter's first-stage proxy.
    fn predictive_point(&self, n: usize, x_prev: &StateVector) -> Result<StateVector>;
}

impl<T: TransitionKernel + ?Sized> TransitionKernel for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }

    fn sample(&self, n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector> {
        (**self).sample(n, x_prev, rng)
    }

    fn sample_counted(
        &self,
        n: usize,
        x_prev: &StateVector,
        rng: &mut dyn RngCore,
    ) -> Result<(StateVector, usize)> {
        (**self).sample_counted(n, x_prev, rng)
    }

    fn predictive_point(&self, n: usize, x_prev: &StateVector) -> Result<StateVector> {
        (**self).predictive_point(n, x_prev)
    }
}

/// `log g_n(x)` for `n >= 1`.
pub trait LogLikelihood: Send + Sync {
    fn log_likelihood(&self, n: usize, x: &StateVector) -> f64;
}

impl<F> LogLikelihood for F
where
    F: Fn(usize, &StateVector) -> f64 + Send + Sync,
{
    fn log_likelihood(&self, n: usize, x: &StateVector) -> f64 {
        self(n, x)
    }
}

/// Gaussian likelihoods for a fixed observation record `y_1, …, y_M`.
#[derive(Debug, Clone)]
pub struct GaussianLikelihoods {
    pub obs: Arc<GaussianObservation>,
    pub ys: Arc<Vec<DVector<f64>>>,
}

impl LogLikelihood for GaussianLikelihoods {
    fn log_likelihood(&self, n: usize, x: &StateVector) -> f64 {
        let r = self.obs.residual(&self.ys[n - 1], x.as_slice());
        self.obs.log_likelihood_from_residual(&r)
    }
}

/// Gaussian prior `N(mean, diag(std²))`, optionally truncated to a closed box
/// (e.g. a hypercube). The truncation factorises over coordinates so each
/// coordinate is drawn by its own rejection loop, which is exact.
#[derive(Debug, Clone)]
pub struct DiagonalGaussianPrior {
    pub mean: StateVector,
    pub std: DVector<f64>,
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
    pub max_attempts: usize,
}

impl DiagonalGaussianPrior {
    pub fn isotropic(mean: StateVector, std: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            std: DVector::from_element(d, std),
            bounds: None,
            max_attempts: crate::ssm::DEFAULT_MAX_ATTEMPTS,
        }
    }

    /// Truncates to the closed hypercube of side `side` centred at `center`.
    pub fn truncated_to_hypercube(mut self, center: &StateVector, side: f64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::InvalidInput(format!("hypercube side must be > 0, got {side}")));
        }
        let half = 0.5 * side;
        self.bounds = Some((center.add_scalar(-half), center.add_scalar(half)));
        Ok(self)
    }
}

impl PriorSampler for DiagonalGaussianPrior {
    fn state_dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<StateVector> {
        Ok(self.sample_counted(rng)?.0)
    }

    fn sample_counted(&self, rng: &mut dyn RngCore) -> Result<(StateVector, usize)> {
        let d = self.mean.len();
        let mut x = StateVector::zeros(d);
        let mut worst = 1;
        for i in 0..d {
            let mut attempts = 0;
            loop {
                attempts += 1;
                let z: f64 = rng.sample(StandardNormal);
                let v = self.mean[i] + self.std[i] * z;
                let ok = match &self.bounds {
                    None => true,
                    Some((lo, hi)) => v >= lo[i] && v <= hi[i],
                };
                if ok {
                    x[i] = v;
                    break;
                }
                if attempts >= self.max_attempts {
                    return Err(Error::ConstraintInfeasible {
                        attempts,
                        origin: self.mean.iter().copied().collect(),
                        acceptance: 0.0,
                        particle: None,
                    });
                }
            }
            worst = worst.max(attempts);
        }
        Ok((x, worst))
    }
}

/// Multivariate Gaussian prior `N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: StateVector,
    chol_l: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mean: StateVector, cov: &DMatrix<f64>) -> Result<Self> {
        Ok(Self { chol_l: psd_sqrt(cov)?, mean })
    }
}

impl PriorSampler for GaussianPrior {
    fn state_dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<StateVector> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(&self.mean + &self.chol_l * z)
    }
}

/// Lower-triangular square root of a PSD matrix; zero for a zero matrix.
fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cov.iter().all(|v| *v == 0.0) {
        return Ok(cov.clone());
    }
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    // semi-definite fallback through the eigendecomposition
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| *l < -1e-10 * cov.amax()) {
        return Err(Error::Numerical("covariance is not positive semi-definite".into()));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt)
}

/// Linear-Gaussian kernel `x ↦ A x' + N(0, Q)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianKernel {
    transition: DMatrix<f64>,
    noise_l: DMatrix<f64>,
}

impl LinearGaussianKernel {
    pub fn new(transition: DMatrix<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if transition.nrows() != transition.ncols() || cov.shape() != transition.shape() {
            return Err(Error::Dimension {
                context: "linear-Gaussian kernel",
                expected: transition.nrows(),
                got: cov.nrows(),
            });
        }
        Ok(Self { noise_l: psd_sqrt(cov)?, transition })
    }

    /// Coordinate-wise scalar transition in `dim` dimensions.
    pub fn from_scalar(t: OuTransition, dim: usize) -> Result<Self> {
        Self::new(
            DMatrix::identity(dim, dim) * t.decay,
            &(DMatrix::identity(dim, dim) * t.variance),
        )
    }
}

impl TransitionKernel for LinearGaussianKernel {
    fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    fn sample(&self, _n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector> {
        let z = DVector::from_fn(x_prev.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(&self.transition * x_prev + &self.noise_l * z)
    }

    fn predictive_point(&self, _n: usize, x_prev: &StateVector) -> Result<StateVector> {
        Ok(&self.transition * x_prev)
    }
}

/// Euler–Maruyama kernel `K_n^h` of an SDE over the grid interval
/// `[t_{n-1}, t_n]`.
#[derive(Clone)]
pub struct EulerKernel<M> {
    pub model: M,
    pub grid: TimeGrid,
}

impl<M: SdeModel> TransitionKernel for EulerKernel<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn sample(&self, n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector> {
        let mut x = x_prev.clone();
        integrate(&self.model, &mut x, self.grid.time(n - 1), self.grid.substep(), self.grid.substeps(), rng)?;
        Ok(x)
    }

    /// The Euler path with zero noise.
    fn predictive_point(&self, n: usize, x_prev: &StateVector) -> Result<StateVector> {
        let mut x = x_prev.clone();
        integrate_deterministic(&self.model, &mut x, self.grid.time(n - 1), self.grid.substep(), self.grid.substeps())?;
        Ok(x)
    }
}

/// Euler–Maruyama kernel of the barrier-modified drift built from `y_n`.
#[derive(Clone)]
pub struct BarrierKernel<M> {
    pub model: M,
    pub grid: TimeGrid,
    pub obs: Arc<GaussianObservation>,
    pub ys: Arc<Vec<DVector<f64>>>,
    pub threshold: f64,
    pub config: BarrierConfig,
}

impl<M: SdeModel + Clone> TransitionKernel for BarrierKernel<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn sample(&self, n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector> {
        let interval = (self.grid.time(n - 1), self.grid.time(n));
        let model = barrier_drift(
            self.model.clone(),
            self.obs.clone(),
            self.ys[n - 1].clone(),
            self.threshold,
            self.config,
            interval,
        )?;
        let mut x = x_prev.clone();
        integrate(&model, &mut x, interval.0, self.grid.substep(), self.grid.substeps(), rng)?;
        Ok(x)
    }

    fn predictive_point(&self, n: usize, x_prev: &StateVector) -> Result<StateVector> {
        let interval = (self.grid.time(n - 1), self.grid.time(n));
        let model = barrier_drift(
            self.model.clone(),
            self.obs.clone(),
            self.ys[n - 1].clone(),
            self.threshold,
            self.config,
            interval,
        )?;
        let mut x = x_prev.clone();
        integrate_deterministic(&model, &mut x, interval.0, self.grid.substep(), self.grid.substeps())?;
        Ok(x)
    }
}

/// Per-step constraint sets `C_1, …, C_M`.
pub trait ConstraintSchedule: Send + Sync {
    fn constraint(&self, n: usize) -> ConstraintSet;
}

impl<T: ConstraintSchedule + ?Sized> ConstraintSchedule for &T {
    fn constraint(&self, n: usize) -> ConstraintSet {
        (**self).constraint(n)
    }
}

impl ConstraintSchedule for ConstraintSet {
    fn constraint(&self, _n: usize) -> ConstraintSet {
        self.clone()
    }
}

impl ConstraintSchedule for Vec<ConstraintSet> {
    fn constraint(&self, n: usize) -> ConstraintSet {
        self[n - 1].clone()
    }
}

/// Superlevel sets `{x : log g_n(x) > threshold}` of the observation record.
#[derive(Debug, Clone)]
pub struct SuperlevelSchedule {
    pub obs: Arc<GaussianObservation>,
    pub ys: Arc<Vec<DVector<f64>>>,
    pub threshold: f64,
}

impl ConstraintSchedule for SuperlevelSchedule {
    fn constraint(&self, n: usize) -> ConstraintSet {
        ConstraintSet::Superlevel {
            obs: self.obs.clone(),
            y: self.ys[n - 1].clone(),
            threshold: self.threshold,
        }
    }
}

/// Truncated kernel `1_{C_n}(x) K_n(x', dx) / K_n(x', C_n)` sampled by
/// rejection from an inner kernel.
pub struct RejectionKernel<K, C> {
    pub inner: K,
    pub constraints: C,
    pub max_attempts: usize,
}

impl<K: TransitionKernel, C: ConstraintSchedule> TransitionKernel for RejectionKernel<K, C> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn sample(&self, n: usize, x_prev: &StateVector, rng: &mut dyn RngCore) -> Result<StateVector> {
        Ok(self.sample_counted(n, x_prev, rng)?.0)
    }

    fn sample_counted(
        &self,
        n: usize,
        x_prev: &StateVector,
        rng: &mut dyn RngCore,
    ) -> Result<(StateVector, usize)> {
        let c = self.constraints.constraint(n);
        let draw = sample_constrained_kernel_rejection(
            |r| self.inner.sample(n, x_prev, r),
            &c,
            self.max_attempts,
            x_prev,
            rng,
        )?;
        Ok((draw.state, draw.attempts))
    }

    fn predictive_point(&self, n: usize, x_prev: &StateVector) -> Result<StateVector> {
        self.inner.predictive_point(n, x_prev)
    }
}
