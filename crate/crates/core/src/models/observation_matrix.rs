use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Standard deviation of the perturbation added to the selection matrix.
pub const DEFAULT_SIGMA_V: f64 = 5e-4;

/// Draws `H = [e_{m_1}, …, e_{m_{d_y}}] + V` (`d_x × d_y`), where the `m_i` are
/// distinct 0-based state indices chosen uniformly and `V_ij ~ N(0, sigma_v²)`.
pub fn make_observation_matrix<R: Rng + ?Sized>(
    d_x: usize,
    d_y: usize,
    sigma_v: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if d_y == 0 || d_y > d_x {
        return Err(Error::InvalidConfig(format!(
            "observation dimension must satisfy 1 <= d_y <= d_x, got d_y = {d_y}, d_x = {d_x}"
        )));
    }
    if !(sigma_v >= 0.0 && sigma_v.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma_v must be >= 0, got {sigma_v}")));
    }
    let picks = sample(rng, d_x, d_y);
    let mut h = DMatrix::zeros(d_x, d_y);
    for (col, row) in picks.iter().enumerate() {
        h[(row, col)] = 1.0;
    }
    if sigma_v > 0.0 {
        for v in h.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma_v * z;
        }
    }
    Ok(h)
}
