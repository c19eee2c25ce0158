//! Verification suites.
//!
//! Each suite builds its fixtures from a seed, compares the library against an
//! independent oracle and returns one [`CheckLine`] per check. The CLI `verify`
//! command and the acceptance target both run these.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::gap::constraint_gap_exact;
use super::rates::{fit_loglog, mc_rate_fit, ou_weak_error_mc, weak_order_fit};
use super::stability::{
    contraction_profile, contraction_profile_with, truncated_kernel, truncated_mixing_constant,
};
use super::stats::{chi_square_gof, clamped_gaussian_mean, ks_one_sample};
use crate::error::{Error, Result};
use crate::filters::{kalman_filter, multinomial_indices, run_filter, RunOptions, Scheme};
use crate::kernel::{
    DiagonalGaussianPrior, EulerKernel, GaussianPrior, LinearGaussianKernel, TransitionKernel,
    RejectionKernel,
};
use crate::models::{
    mixing_discrete_ssm, ou_euler_kernel, ou_exact_kernel, DiscreteSsm, LinearGaussianSsm, OrnsteinUhlenbeck,
};
use crate::rng::{Stream, StreamRng, Streams};
use crate::sde::{StateVector, TimeGrid};
use crate::ssm::hypercube_constraint;

/// Clamp interval of the test function in the rate and discretisation checks.
pub const CLAMP: (f64, f64) = (-5.0, 5.0);

/// Outcome of one check: what was measured and what was required.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub measured: String,
    pub requirement: String,
    pub passed: bool,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, measured: impl Into<String>, requirement: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), measured: measured.into(), requirement: requirement.into(), passed }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {} (required {})", self.name, self.measured, self.requirement)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: String,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        for line in &self.lines {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 7] =
    ["stability", "rate", "weak-order", "constraint-gap", "truncation", "resampling", "coupling"];

pub fn run_suite(name: &str, seed: u64, parallel: bool) -> Result<CheckReport> {
    match name {
        "stability" => stability_suite(seed),
        "rate" => rate_suite(seed, parallel),
        "weak-order" => weak_order_suite(seed),
        "constraint-gap" => constraint_gap_suite(seed),
        "truncation" => truncation_suite(seed),
        "resampling" => resampling_suite(seed),
        "coupling" => coupling_suite(seed, parallel),
        other => Err(Error::InvalidInput(format!(
            "unknown verify suite '{other}', expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

fn random_pmf(states: usize, support: &[bool], rng: &mut StreamRng) -> DVector<f64> {
    let mut p = DVector::from_fn(states, |i, _| if support[i] { rng.random_range(0.01..1.0) } else { 0.0 });
    p /= p.sum();
    p
}

/// Worst `ratio − bound` over a profile.
fn worst_excess(profile: &[super::stability::ContractionPoint]) -> f64 {
    profile.iter().map(|p| p.ratio - p.bound).fold(f64::NEG_INFINITY, f64::max)
}

/// Filter forgetting on 20 random mixing fixtures with at most 10 states, for
/// the kernel and for a truncation of it.
pub fn stability_suite(seed: u64) -> Result<CheckReport> {
    const FIXTURES: usize = 20;
    const STEPS: usize = 50;
    const TOL: f64 = 1e-12;
    let streams = Streams::new(seed);
    let mut full = f64::NEG_INFINITY;
    let mut trunc = f64::NEG_INFINITY;
    let mut full_fail = 0;
    let mut trunc_fail = 0;
    for k in 0..FIXTURES {
        let mut rng = streams.get(Stream::Fixture, k as u64, 0);
        let states = rng.random_range(2..=10);
        let target = rng.random_range(0.3..0.9);
        let ssm = mixing_discrete_ssm(states, STEPS, target, &mut rng)?;
        let all = vec![true; states];
        let mu = random_pmf(states, &all, &mut rng);
        let eta = random_pmf(states, &all, &mut rng);
        let excess = worst_excess(&contraction_profile(&ssm, &mu, &eta, STEPS)?);
        full = full.max(excess);
        full_fail += usize::from(excess > TOL);

        let mut set: Vec<bool> = (0..states).map(|_| rng.random_bool(0.6)).collect();
        set[rng.random_range(0..states)] = true;
        let kh = truncated_kernel(ssm.transition(), &set)?;
        let gamma = truncated_mixing_constant(ssm.transition(), &set)?;
        let mu = random_pmf(states, &set, &mut rng);
        let eta = random_pmf(states, &set, &mut rng);
        let excess = worst_excess(&contraction_profile_with(&kh, ssm.likelihoods(), &mu, &eta, STEPS, gamma)?);
        trunc = trunc.max(excess);
        trunc_fail += usize::from(excess > TOL);
    }
    Ok(CheckReport {
        suite: "stability".into(),
        lines: vec![
            CheckLine::new(
                "contraction ratio <= (1-g^2)^n/g^2",
                format!("{FIXTURES} fixtures, n <= {STEPS}, {full_fail} violations, max ratio-bound {full:.3e}"),
                format!("ratio-bound <= {TOL:e}"),
                full_fail == 0,
            ),
            CheckLine::new(
                "truncated-kernel contraction",
                format!("{FIXTURES} fixtures, {trunc_fail} violations, max ratio-bound {trunc:.3e}"),
                format!("ratio-bound <= {TOL:e}"),
                trunc_fail == 0,
            ),
        ],
    })
}

/// Draws `X_1..X_M` and `Y_1..Y_M` from a scalar linear-Gaussian model.
fn scalar_record(ssm: &LinearGaussianSsm, steps: usize, rng: &mut StreamRng) -> Vec<DVector<f64>> {
    let a = ssm.transition[(0, 0)];
    let q = ssm.transition_cov[(0, 0)].sqrt();
    let r = ssm.obs_cov[(0, 0)].sqrt();
    let mut x = ssm.prior_mean[0] + ssm.prior_cov[(0, 0)].sqrt() * rng.sample::<f64, _>(StandardNormal);
    (0..steps)
        .map(|_| {
            x = a * x + q * rng.sample::<f64, _>(StandardNormal);
            DVector::from_element(1, x + r * rng.sample::<f64, _>(StandardNormal))
        })
        .collect()
}

fn scalar_log_lik(ys: &[DVector<f64>], r: f64) -> impl Fn(usize, &StateVector) -> f64 + Send + Sync + '_ {
    move |n: usize, x: &StateVector| -0.5 * (ys[n - 1][0] - x[0]).powi(2) / r
}

/// Clamped posterior means of the Kalman recursion, `n = 1..=M`.
fn kalman_clamped(ssm: &LinearGaussianSsm, ys: &[DVector<f64>]) -> Result<Vec<f64>> {
    Ok(kalman_filter(ssm, ys)?
        .iter()
        .map(|s| clamped_gaussian_mean(s.mean[0], s.cov[(0, 0)].max(0.0).sqrt(), CLAMP.0, CLAMP.1))
        .collect())
}

/// Bootstrap PF error against the Kalman filter as `N` grows, 200 repetitions.
pub fn rate_suite(seed: u64, parallel: bool) -> Result<CheckReport> {
    const STEPS: usize = 20;
    const REPS: usize = 200;
    let levels = [100usize, 1000, 10000];
    let ssm = LinearGaussianSsm::scalar(0.9, 1.0, 1.0, 0.0, 1.0)?;
    let streams = Streams::new(seed);
    let ys = scalar_record(&ssm, STEPS, &mut streams.get(Stream::Truth, 0, 0));
    let oracle = kalman_clamped(&ssm, &ys)?[STEPS - 1];
    let kernel = LinearGaussianKernel::new(ssm.transition.clone(), &ssm.transition_cov)?;
    let prior = GaussianPrior::new(ssm.prior_mean.clone(), &ssm.prior_cov)?;
    let lik = scalar_log_lik(&ys, ssm.obs_cov[(0, 0)]);
    let opts = RunOptions { snapshot_steps: vec![STEPS], ..Default::default() };
    let fit = mc_rate_fit(&levels, REPS, parallel, |n, rep| {
        let rs = streams.child(Stream::Repetition, rep as u64, n as u64);
        let run = run_filter(Scheme::Bootstrap(&kernel), &prior, &lik, STEPS, n, &rs, &opts)?;
        let ens = &run.snapshots[0].ensemble;
        let est: f64 = ens.states.iter().zip(ens.weights()?).map(|(x, w)| w * x[0].clamp(CLAMP.0, CLAMP.1)).sum();
        Ok(est - oracle)
    })?;
    let (lo, hi) = (-0.65, -0.35);
    Ok(CheckReport {
        suite: "rate".into(),
        lines: vec![CheckLine::new(
            "Monte Carlo RMSE slope in N",
            format!("slope {:.4} (RMSE {:?}, r2 {:.4})", fit.slope, short(&fit.errors), fit.r2),
            format!("slope in [{lo}, {hi}]"),
            (lo..=hi).contains(&fit.slope),
        )],
    })
}

fn short(v: &[f64]) -> Vec<String> {
    v.iter().map(|e| format!("{e:.4e}")).collect()
}

/// Exact-kernel vs Euler–Maruyama-kernel OU filters on a common observation
/// record, plus a sampler-level weak-error fit.
pub fn weak_order_suite(seed: u64) -> Result<CheckReport> {
    const STEPS: usize = 20;
    const DT: f64 = 0.5;
    const R: f64 = 0.5;
    let (theta, sigma) = (1.0, 1.0);
    let hs = [0.02, 0.01, 0.005];
    let exact = ou_exact_kernel(theta, sigma, DT)?;
    let exact_ssm = LinearGaussianSsm::scalar(exact.decay, exact.variance, R, 0.0, 1.0)?;
    let streams = Streams::new(seed);
    let ys = scalar_record(&exact_ssm, STEPS, &mut streams.get(Stream::Truth, 0, 0));
    let reference = kalman_clamped(&exact_ssm, &ys)?;
    let filter_fit = weak_order_fit(&hs, |h| {
        let em = ou_euler_kernel(theta, sigma, DT, h)?;
        let ssm = LinearGaussianSsm::scalar(em.decay, em.variance, R, 0.0, 1.0)?;
        let approx = kalman_clamped(&ssm, &ys)?;
        Ok(reference.iter().zip(&approx).map(|(a, b)| (a - b).abs()).sum::<f64>() / STEPS as f64)
    })?;

    let process = OrnsteinUhlenbeck::new(theta, sigma, 1)?;
    let paths = 100_000;
    let x0 = 50.0;
    let mc = streams.child(Stream::Repetition, 0, 0);
    let sampler_fit = weak_order_fit(&hs, |h| ou_weak_error_mc(&process, DT, x0, h, paths, &mc))?;

    let (lo, hi) = (0.7, 1.3);
    let line = |name: &str, fit: &super::rates::RateFit| {
        CheckLine::new(
            name,
            format!("slope {:.4} (errors {:?})", fit.slope, short(&fit.errors)),
            format!("slope in [{lo}, {hi}]"),
            (lo..=hi).contains(&fit.slope),
        )
    };
    Ok(CheckReport {
        suite: "weak-order".into(),
        lines: vec![
            line("filter error |pi_n(f) - pi_n^h(f)| in h", &filter_fit),
            line(&format!("sampler weak error in h (x0 = {x0}, {paths} paths)"), &sampler_fit),
        ],
    })
}

/// Finite-state fixture with nested constraints `{0}, {0,1}, …`: kernel rows
/// `(1−η) p + η (a δ_0 + (1−a) δ_i)` with geometric `p`.
pub fn nested_gap_fixture(states: usize, steps: usize, rng: &mut StreamRng) -> Result<DiscreteSsm> {
    let eta = rng.random_range(0.2..0.8);
    let a = rng.random_range(0.2..0.8);
    let decay = rng.random_range(0.3..0.7);
    let mut p = DVector::from_fn(states, |i, _| f64::powi(decay, i as i32));
    p /= p.sum();
    let k = DMatrix::from_fn(states, states, |i, j| {
        let mut v = (1.0 - eta) * p[j];
        if j == 0 {
            v += eta * a;
        }
        if j == i {
            v += eta * (1.0 - a);
        }
        v
    });
    let k = DMatrix::from_fn(states, states, |i, j| k[(i, j)] / k.row(i).sum());
    let likelihoods = (0..steps)
        .map(|_| DVector::from_fn(states, |_, _| rng.random_range(0.05..1.0)))
        .collect();
    let mut prior = p.map(|v| v + rng.random_range(0.0..0.1));
    prior /= prior.sum();
    DiscreteSsm::new(k, likelihoods, prior)
}

/// Exact gap between the filter and its constrained versions as the
/// constraint grows to the whole space.
pub fn constraint_gap_suite(seed: u64) -> Result<CheckReport> {
    const FIXTURES: usize = 10;
    const TOL: f64 = 1e-12;
    let streams = Streams::new(seed);
    let mut gap_ok = true;
    let mut full_ok = true;
    let mut eps_ok = true;
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    let mut worst_full: f64 = 0.0;
    let mut example = String::new();
    for k in 0..FIXTURES {
        let mut rng = streams.get(Stream::Fixture, k as u64, 1);
        let states = rng.random_range(4..=10);
        let ssm = nested_gap_fixture(states, 30, &mut rng)?;
        let sets: Vec<Vec<bool>> = (0..states).map(|l| (0..states).map(|i| i <= l).collect()).collect();
        let g = constraint_gap_exact(&ssm, &sets)?;
        for w in g.gap.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            gap_ok &= w[1] <= w[0] + TOL;
        }
        for w in g.epsilon.windows(2) {
            eps_ok &= w[1] >= w[0] - TOL;
        }
        let last = *g.gap.last().expect("non-empty");
        worst_full = worst_full.max(last);
        full_ok &= last <= TOL;
        if k == 0 {
            example = format!("gaps {:?}, eps {:?}", short(&g.gap), short(&g.epsilon));
        }
    }
    Ok(CheckReport {
        suite: "constraint-gap".into(),
        lines: vec![
            CheckLine::new(
                "gap non-increasing in l",
                format!("{FIXTURES} fixtures, max increase {worst_rise:.3e}; fixture 0: {example}"),
                format!("increase <= {TOL:e}"),
                gap_ok,
            ),
            CheckLine::new(
                "gap at full space",
                format!("max {worst_full:.3e}"),
                format!("<= {TOL:e}"),
                full_ok,
            ),
            CheckLine::new("eps^l non-decreasing", format!("{FIXTURES} fixtures"), "non-decreasing", eps_ok),
        ],
    })
}

/// Rejection draws from a 1-d Gaussian kernel truncated to an interval
/// against the truncated-normal law.
pub fn truncation_suite(seed: u64) -> Result<CheckReport> {
    const DRAWS: usize = 100_000;
    let (decay, variance) = (0.9, 1.0);
    let x_prev = StateVector::from_element(1, 0.3);
    let (lo, hi) = (-0.5, 1.2);
    let inner = LinearGaussianKernel::new(DMatrix::from_element(1, 1, decay), &DMatrix::from_element(1, 1, variance))?;
    let c = hypercube_constraint(StateVector::from_element(1, 0.5 * (lo + hi)), hi - lo)?;
    let kernel = RejectionKernel { inner, constraints: c, max_attempts: 10_000 };
    let mut rng = Streams::new(seed).get(Stream::Propagate, 0, 0);
    let mut samples = Vec::with_capacity(DRAWS);
    let mut attempts = 0usize;
    for _ in 0..DRAWS {
        let (x, a) = kernel.sample_counted(1, &x_prev, &mut rng)?;
        samples.push(x[0]);
        attempts += a;
    }
    let law = Normal::new(decay * x_prev[0], variance.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
    let (fa, fb) = (law.cdf(lo), law.cdf(hi));
    let mass = fb - fa;
    let ks = ks_one_sample(&samples, |x| ((law.cdf(x) - fa) / mass).clamp(0.0, 1.0))?;
    let estimate = DRAWS as f64 / attempts as f64;
    let se = mass * ((1.0 - mass) / DRAWS as f64).sqrt();
    let z = (estimate - mass) / se;
    Ok(CheckReport {
        suite: "truncation".into(),
        lines: vec![
            CheckLine::new(
                "KS against truncated normal",
                format!("D = {:.5}, p = {:.4} ({DRAWS} draws)", ks.statistic, ks.p_value),
                "p >= 0.01",
                ks.p_value >= 0.01,
            ),
            CheckLine::new(
                "acceptance rate vs K(x', C)",
                format!("estimate {estimate:.5}, exact {mass:.5}, z = {z:.3}"),
                "|z| <= 3",
                z.abs() <= 3.0,
            ),
        ],
    })
}

/// Offspring counts of multinomial resampling over 10^4 repetitions.
pub fn resampling_suite(seed: u64) -> Result<CheckReport> {
    const N: usize = 10;
    const REPS: usize = 10_000;
    let streams = Streams::new(seed);
    let mut wrng = streams.get(Stream::Fixture, 0, 2);
    let mut w: Vec<f64> = (0..N).map(|_| wrng.random_range(0.02..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let mut counts = vec![0.0; N];
    for rep in 0..REPS {
        let mut rng = streams.get(Stream::Resample, rep as u64, 0);
        for i in multinomial_indices(&w, N, &mut rng) {
            counts[i] += 1.0;
        }
    }
    let worst_z = (0..N)
        .map(|i| {
            let mean = counts[i] / REPS as f64;
            let se = (N as f64 * w[i] * (1.0 - w[i]) / REPS as f64).sqrt();
            ((mean - N as f64 * w[i]) / se).abs()
        })
        .fold(0.0, f64::max);
    let expected: Vec<f64> = w.iter().map(|wi| wi * (N * REPS) as f64).collect();
    let gof = chi_square_gof(&counts, &expected)?;
    Ok(CheckReport {
        suite: "resampling".into(),
        lines: vec![
            CheckLine::new(
                "E[count_i] = N w_i",
                format!("max |z| = {worst_z:.3} over {N} particles, {REPS} repetitions"),
                "|z| <= 4",
                worst_z <= 4.0,
            ),
            CheckLine::new(
                "chi-square GOF of offspring counts",
                format!("X2 = {:.3}, p = {:.4}", gof.statistic, gof.p_value),
                "p >= 0.01",
                gof.p_value >= 0.01,
            ),
        ],
    })
}

/// Bootstrap PF on the Euler–Maruyama OU kernel with `h = N^{-1/2}` scaling
/// against the exact-kernel Kalman filter.
pub fn coupling_suite(seed: u64, parallel: bool) -> Result<CheckReport> {
    const STEPS: usize = 20;
    const REPS: usize = 100;
    const DT: f64 = 0.5;
    const R: f64 = 0.5;
    let pairs = [(400usize, 0.05), (1600, 0.025), (6400, 0.0125)];
    let exact = ou_exact_kernel(1.0, 1.0, DT)?;
    let ssm = LinearGaussianSsm::scalar(exact.decay, exact.variance, R, 0.0, 1.0)?;
    let streams = Streams::new(seed);
    let ys = scalar_record(&ssm, STEPS, &mut streams.get(Stream::Truth, 0, 0));
    let oracle: Vec<f64> = kalman_filter(&ssm, &ys)?.iter().map(|s| s.mean[0]).collect();
    let prior = DiagonalGaussianPrior::isotropic(StateVector::zeros(1), 1.0);
    let lik = scalar_log_lik(&ys, R);
    let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1)?;
    let mut rmse = Vec::with_capacity(pairs.len());
    for &(n, h) in &pairs {
        let kernel = EulerKernel { model, grid: TimeGrid::new(0.0, DT, h, STEPS)? };
        let sq = |rep: usize| -> Result<f64> {
            let rs = streams.child(Stream::Repetition, rep as u64, n as u64);
            let run = run_filter(Scheme::Bootstrap(&kernel), &prior, &lik, STEPS, n, &rs, &RunOptions::default())?;
            Ok(run.estimates.iter().zip(&oracle).map(|(e, o)| (e[0] - o).powi(2)).sum())
        };
        let per_rep: Vec<Result<f64>> = if parallel {
            (0..REPS).into_par_iter().map(sq).collect()
        } else {
            (0..REPS).map(sq).collect()
        };
        let total = per_rep.into_iter().sum::<Result<f64>>()?;
        rmse.push((total / (REPS * STEPS) as f64).sqrt());
    }
    let decreasing = rmse.windows(2).all(|w| w[1] < w[0]);
    let ns: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    let slope = fit_loglog(&ns, &rmse)?.slope;
    Ok(CheckReport {
        suite: "coupling".into(),
        lines: vec![CheckLine::new(
            "RMSE vs exact filter with h = N^(-1/2)",
            format!("(N, h) = {pairs:?}: RMSE {:?}, slope in N {slope:.3}", short(&rmse)),
            "strictly decreasing",
            decreasing,
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let l = CheckLine::new("x", "1", "< 2", true);
        assert_eq!(l.to_string(), "[PASS] x: 1 (required < 2)");
        let r = CheckReport { suite: "s".into(), lines: vec![l, CheckLine::new("y", "3", "< 2", false)] };
        assert!(!r.passed());
    }

    #[test]
    fn unknown_suite_rejected() {
        assert!(run_suite("nope", 0, false).is_err());
    }

    #[test]
    fn nested_fixture_epsilon_increases() {
        let mut rng = Streams::new(4).get(Stream::Fixture, 0, 0);
        let ssm = nested_gap_fixture(6, 5, &mut rng).unwrap();
        let sets: Vec<Vec<bool>> = (0..6).map(|l| (0..6).map(|i| i <= l).collect()).collect();
        let g = constraint_gap_exact(&ssm, &sets).unwrap();
        assert!(g.epsilon.windows(2).all(|w| w[1] > w[0]));
        assert!(g.gap[5] < 1e-12);
    }

    #[test]
    fn fast_suites_pass() {
        for s in ["stability", "constraint-gap", "resampling"] {
            let r = run_suite(s, 0, false).unwrap();
            assert!(r.passed(), "{r}");
        }
    }
}
