use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sde::StateVector;

/// `Σ_n ‖X_n − X̂_n‖² / Σ_n ‖X_n‖²`.
pub fn nmse(truth: &[StateVector], estimates: &[StateVector]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(Error::InvalidInput(format!(
            "nmse needs equal non-empty sequences, got {} and {}",
            truth.len(),
            estimates.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, e) in truth.iter().zip(estimates) {
        if x.len() != e.len() {
            return Err(Error::Dimension { context: "nmse", expected: x.len(), got: e.len() });
        }
        num += (x - e).norm_squared();
        den += x.norm_squared();
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("nmse: truth is identically zero".into()));
    }
    Ok(num / den)
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    0.5 * (p - q).abs().sum()
}
