use std::f64::consts::PI;

use crate::error::{EstError, Result};
use crate::harmonics::{eval_real_sh, Orientation, SteerableTensor};
use crate::tensor::DenseTensor;

/// `Y(r̂)` up to degree `l_max` as a one-channel steerable tensor.
pub fn sh_edge_embedding(r: [f64; 3], l_max: usize) -> Result<SteerableTensor> {
    let p = Orientation::from_direction(r)?;
    SteerableTensor::new(l_max, DenseTensor::col_vector(eval_real_sh(l_max, p)))
}

/// `(cos(πr/r_c) + 1)/2`, zero beyond the cutoff.
pub fn cosine_cutoff(r: f64, cutoff: f64) -> f64 {
    if r >= cutoff {
        0.0
    } else {
        0.5 * ((PI * r / cutoff).cos() + 1.0)
    }
}

/// Gaussians centred uniformly on `[0, r_c]` with width equal to the spacing,
/// multiplied by [`cosine_cutoff`].
pub fn radial_basis(r: f64, cutoff: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(EstError::invalid("radial basis needs at least one function"));
    }
    if !(r.is_finite() && r >= 0.0) || r > cutoff {
        return Err(EstError::invalid(format!("distance {r} is outside [0, {cutoff}]")));
    }
    let width = if count == 1 { cutoff } else { cutoff / (count - 1) as f64 };
    let env = cosine_cutoff(r, cutoff);
    Ok((0..count)
        .map(|k| {
            let z = (r - k as f64 * width) / width;
            env * (-0.5 * z * z).exp()
        })
        .collect())
}
