use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ou_exact_kernel, OrnsteinUhlenbeck};
use crate::rng::{Stream, Streams};
use crate::sde::{integrate, StateVector};

/// Least-squares fit of `log error = intercept + slope · log level`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RateFit {
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

pub fn fit_loglog(levels: &[f64], errors: &[f64]) -> Result<RateFit> {
    if levels.len() < 2 || levels.len() != errors.len() {
        return Err(Error::InvalidInput("rate fit needs at least two (level, error) pairs".into()));
    }
    if !strictly_monotone(levels) || levels.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("rate-fit levels must be positive and strictly monotone".into()));
    }
    if errors.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidInput(format!("rate fit needs positive finite errors, got {errors:?}")));
    }
    let xs: Vec<f64> = levels.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit { levels: levels.to_vec(), errors: errors.to_vec(), slope, intercept, r2 })
}

/// RMSE over `repetitions` calls of `error_fn(N, rep)` per particle count,
/// fitted against `N`.
pub fn mc_rate_fit<F>(levels: &[usize], repetitions: usize, parallel: bool, error_fn: F) -> Result<RateFit>
where
    F: Fn(usize, usize) -> Result<f64> + Sync + Send,
{
    if levels.len() < 3 || repetitions < 50 {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo rate fit needs >= 3 levels and >= 50 repetitions, got {} and {repetitions}",
            levels.len()
        )));
    }
    let mut rmse = Vec::with_capacity(levels.len());
    for &n in levels {
        let errs: Vec<Result<f64>> = if parallel {
            (0..repetitions).into_par_iter().map(|r| error_fn(n, r)).collect()
        } else {
            (0..repetitions).map(|r| error_fn(n, r)).collect()
        };
        let mut sq = 0.0;
        for e in errs {
            sq += e?.powi(2);
        }
        rmse.push((sq / repetitions as f64).sqrt());
    }
    let lv: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
    fit_loglog(&lv, &rmse)
}

/// Errors `error_at(h)` over step sizes `h`, fitted against `h`.
pub fn weak_order_fit<F>(levels: &[f64], error_at: F) -> Result<RateFit>
where
    F: Fn(f64) -> Result<f64>,
{
    if levels.len() < 3 {
        return Err(Error::InvalidInput("weak-order fit needs >= 3 step sizes".into()));
    }
    let errors = levels.iter().map(|&h| error_at(h)).collect::<Result<Vec<_>>>()?;
    fit_loglog(levels, &errors)
}

/// Monte Carlo estimate of `|E X^h_Δ − E X_Δ|` for a scalar OU process started
/// at `x0`, where `X^h` is the Euler–Maruyama sampler with step `h` and the
/// exact mean is `e^{−θΔ} x0`. Path `p` uses the same random stream at every
/// `h`.
pub fn ou_weak_error_mc(
    process: &OrnsteinUhlenbeck,
    dt: f64,
    x0: f64,
    h: f64,
    paths: usize,
    streams: &Streams,
) -> Result<f64> {
    let substeps = crate::sde::substep_count(dt, h)?;
    let exact = ou_exact_kernel(process.theta, process.sigma, dt)?.decay * x0;
    let sum: f64 = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = streams.get(Stream::Repetition, p as u64, 0);
            let mut x = StateVector::from_element(1, x0);
            integrate(process, &mut x, 0.0, h, substeps, &mut rng).map(|_| x[0])
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok((sum / paths as f64 - exact).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ou_euler_kernel;

    #[test]
    fn planted_slopes_recovered() {
        let levels = [100.0, 1000.0, 10000.0];
        let errs: Vec<f64> = levels.iter().map(|n: &f64| 3.0 / n.sqrt()).collect();
        let fit = fit_loglog(&levels, &errs).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-10);
        let flat = fit_loglog(&levels, &[0.2; 3]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        let hs = [0.02, 0.01, 0.005];
        let planted = fit_loglog(&hs, &hs.map(|h| 0.7 * h)).unwrap();
        assert!((planted.slope - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mc_fit_on_synthetic_errors() {
        let fit = mc_rate_fit(&[100, 1000, 10000], 50, true, |n, _| Ok(2.0 / (n as f64).sqrt())).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
        assert!(mc_rate_fit(&[100, 1000], 50, false, |_, _| Ok(1.0)).is_err());
        assert!(mc_rate_fit(&[1, 2, 3], 10, false, |_, _| Ok(1.0)).is_err());
    }

    #[test]
    fn exact_kernel_against_itself_has_no_error() {
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|_| {
                let k = ou_exact_kernel(1.0, 1.0, 0.5).unwrap();
                (k.decay - ou_exact_kernel(1.0, 1.0, 0.5).unwrap().decay).abs()
            })
            .collect();
        assert!(errs.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn closed_form_one_step_mean_has_unit_order() {
        let x0 = 1.5;
        let exact = ou_exact_kernel(1.0, 1.0, 0.5).unwrap().decay;
        let fit = weak_order_fit(&[0.02, 0.01, 0.005, 0.0025], |h| {
            Ok((x0 * (exact - ou_euler_kernel(1.0, 1.0, 0.5, h)?.decay)).abs())
        })
        .unwrap();
        assert!((fit.slope - 1.0).abs() < 0.02, "slope {}", fit.slope);
    }

    #[test]
    fn levels_must_be_monotone() {
        assert!(fit_loglog(&[1.0, 3.0, 2.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).is_err());
    }
}
