use rand::{Rng, RngCore};

use crate::sde::StateVector;

/// Resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

impl Resampling {
    pub fn indices(self, weights: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
        match self {
            Resampling::Multinomial => multinomial_indices(weights, n, rng),
            Resampling::Systematic => systematic_indices(weights, n, rng),
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // guard against the last partial sum landing just below 1
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

fn locate(cdf: &[f64], weights: &[f64], u: f64) -> usize {
    let mut i = cdf.partition_point(|c| *c <= u);
    // never select a zero-weight index that sits on a tie
    while weights[i] == 0.0 && i + 1 < weights.len() {
        i += 1;
    }
    while weights[i] == 0.0 && i > 0 {
        i -= 1;
    }
    i
}

/// `n` i.i.d. categorical draws from normalised `weights`.
pub fn multinomial_indices(weights: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let cdf = cumulative(weights);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            locate(&cdf, weights, u)
        })
        .collect()
}

/// Systematic resampling: one uniform offset, `n` evenly spaced points.
pub fn systematic_indices(weights: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let cdf = cumulative(weights);
    let u0: f64 = rng.random();
    (0..n)
        .map(|k| locate(&cdf, weights, (k as f64 + u0) / n as f64))
        .collect()
}

/// Copies of the input states selected by multinomial resampling.
pub fn multinomial_resample(
    states: &[StateVector],
    weights: &[f64],
    rng: &mut dyn RngCore,
) -> Vec<StateVector> {
    multinomial_indices(weights, states.len(), rng)
        .into_iter()
        .map(|i| states[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, Streams};
    use nalgebra::dvector;

    #[test]
    fn point_mass_selects_single_state() {
        let states = vec![dvector![1.0], dvector![2.0], dvector![3.0]];
        let mut rng = Streams::new(1).get(Stream::Resample, 0, 0);
        let out = multinomial_resample(&states, &[1.0, 0.0, 0.0], &mut rng);
        assert!(out.iter().all(|s| *s == states[0]));
        let last = systematic_indices(&[0.0, 0.0, 1.0], 5, &mut rng);
        assert_eq!(last, vec![2; 5]);
    }

    #[test]
    fn zero_weights_never_selected() {
        let w = [0.5, 0.0, 0.5, 0.0];
        let mut rng = Streams::new(2).get(Stream::Resample, 0, 0);
        for _ in 0..100 {
            assert!(multinomial_indices(&w, 10, &mut rng).iter().all(|i| i % 2 == 0));
            assert!(systematic_indices(&w, 10, &mut rng).iter().all(|i| i % 2 == 0));
        }
    }

    #[test]
    fn systematic_counts_are_within_one_of_expectation() {
        let w = [0.1, 0.35, 0.05, 0.5];
        let mut rng = Streams::new(3).get(Stream::Resample, 0, 0);
        for _ in 0..200 {
            let idx = systematic_indices(&w, 20, &mut rng);
            for (i, wi) in w.iter().enumerate() {
                let c = idx.iter().filter(|&&k| k == i).count() as f64;
                assert!((c - 20.0 * wi).abs() <= 1.0 + 1e-12);
            }
        }
    }
}
