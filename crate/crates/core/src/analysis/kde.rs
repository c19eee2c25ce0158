use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

fn weighted_moments(samples: &[f64], weights: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean: f64 = samples.iter().zip(weights).map(|(x, w)| w * x).sum();
    let var: f64 = samples.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
    (mean, var * n / (n - 1.0))
}

/// `1.06 σ̂ N^{-1/5}`, floored at `1e-6 (1 + |mean|)` for degenerate samples.
pub fn silverman_bandwidth(samples: &[f64], weights: &[f64]) -> f64 {
    let (mean, var) = weighted_moments(samples, weights);
    let h = 1.06 * var.max(0.0).sqrt() * (samples.len() as f64).powf(-0.2);
    h.max(1e-6 * (1.0 + mean.abs()))
}

/// Weighted Gaussian-kernel density estimate on `grid`. Uniform weights are
/// used when `weights` is `None`.
pub fn kde_marginal(
    samples: &[f64],
    weights: Option<&[f64]>,
    grid: &[f64],
    bandwidth: Option<f64>,
) -> Result<DensityEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidInput("kde needs at least two samples".into()));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("kde grid must be strictly increasing".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::Dimension { context: "kde weights", expected: n, got: w.len() })
        }
        Some(w) => {
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidInput("kde weights sum to zero".into()));
            }
            w.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / n as f64; n],
    };
    let bw = match bandwidth {
        Some(b) if !(b > 0.0) => return Err(Error::InvalidInput(format!("bandwidth must be > 0, got {b}"))),
        Some(b) => b,
        None => silverman_bandwidth(samples, &w),
    };
    let norm = 1.0 / (bw * (2.0 * std::f64::consts::PI).sqrt());
    let values = grid
        .iter()
        .map(|g| {
            samples
                .iter()
                .zip(&w)
                .map(|(x, wi)| wi * (-0.5 * ((g - x) / bw).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityEstimate { grid: grid.to_vec(), values, bandwidth: bw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn equal_samples_peak_at_value() {
        let d = kde_marginal(&[2.5; 10], None, &linspace(2.0, 3.0, 101), None).unwrap();
        let argmax = d.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((d.grid[argmax] - 2.5).abs() < 1e-12);
        assert!((d.bandwidth - 3.5e-6).abs() < 1e-18);
    }

    #[test]
    fn normal_samples_recover_density() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = linspace(-3.0, 3.0, 121);
        let d = kde_marginal(&xs, None, &grid, Some(0.1)).unwrap();
        for (g, v) in grid.iter().zip(&d.values) {
            let phi = (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((v - phi).abs() < 0.02);
        }
        let wide = linspace(-4.5 - 4.0 * d.bandwidth, 4.5 + 4.0 * d.bandwidth, 2001);
        let full = kde_marginal(&xs[..2000], None, &wide, None).unwrap();
        assert!((full.integral() - 1.0).abs() < 0.03);
    }

    #[test]
    fn uniform_weights_match_textbook_formula() {
        let xs = [0.3, -1.2, 2.2, 0.9, 0.0];
        let grid = linspace(-3.0, 3.0, 13);
        let a = kde_marginal(&xs, None, &grid, None).unwrap();
        let b = kde_marginal(&xs, Some(&[7.0; 5]), &grid, None).unwrap();
        let h = a.bandwidth;
        for (k, g) in grid.iter().enumerate() {
            let textbook: f64 = xs
                .iter()
                .map(|x| (-0.5 * ((g - x) / h).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt())
                .sum::<f64>()
                / (5.0 * h);
            assert!((a.values[k] - textbook).abs() < 1e-12);
            assert!((b.values[k] - textbook).abs() < 1e-12);
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((h - 1.06 * sd * 5f64.powf(-0.2)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kde_marginal(&[1.0], None, &[0.0, 1.0], None).is_err());
        assert!(kde_marginal(&[1.0, 2.0], None, &[1.0, 0.0], None).is_err());
        assert!(kde_marginal(&[1.0, 2.0], Some(&[1.0]), &[0.0, 1.0], None).is_err());
    }
}
