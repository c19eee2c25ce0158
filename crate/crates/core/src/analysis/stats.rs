use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `P(K > λ)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<GofResult> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KS test needs samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok(GofResult { statistic: d, p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d) })
}

/// Pearson chi-square test of observed counts against expected counts, with
/// `cells − 1` degrees of freedom.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<GofResult> {
    if observed.len() < 2 || observed.len() != expected.len() || expected.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("chi-square test needs >= 2 cells with positive expectations".into()));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(GofResult { statistic: stat, p_value: 1.0 - dist.cdf(stat) })
}

/// `E[clamp(X, lo, hi)]` for `X ~ N(mean, sd²)`.
pub fn clamped_gaussian_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd == 0.0 {
        return mean.clamp(lo, hi);
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    lo * z.cdf(a) + hi * (1.0 - z.cdf(b)) + mean * (z.cdf(b) - z.cdf(a)) + sd * (z.pdf(a) - z.pdf(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_accepts_uniform_and_rejects_shift() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let ok = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ok.p_value > 0.01);
        let bad = ks_one_sample(&xs, |x| (x - 0.05).clamp(0.0, 1.0)).unwrap();
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // classic critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn chi_square_exact_fit() {
        let r = chi_square_gof(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square_gof(&[0.0, 10.0], &[5.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 10.0);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn clamped_mean_limits() {
        assert!((clamped_gaussian_mean(0.7, 1.0, -1e9, 1e9) - 0.7).abs() < 1e-12);
        assert!((clamped_gaussian_mean(0.0, 1.0, -5.0, 5.0)).abs() < 1e-15);
        assert_eq!(clamped_gaussian_mean(9.0, 0.0, -5.0, 5.0), 5.0);
        assert!((clamped_gaussian_mean(100.0, 1.0, -5.0, 5.0) - 5.0).abs() < 1e-12);
        // numerical quadrature cross-check
        let (m, s) = (4.0, 1.5);
        let k = 200_000;
        let (a, b) = (m - 12.0 * s, m + 12.0 * s);
        let dx = (b - a) / k as f64;
        let quad: f64 = (0..k)
            .map(|i| {
                let x = a + (i as f64 + 0.5) * dx;
                x.clamp(-5.0, 5.0) * (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) * dx
            })
            .sum();
        assert!((clamped_gaussian_mean(m, s, -5.0, 5.0) - quad).abs() < 1e-9);
    }
}
