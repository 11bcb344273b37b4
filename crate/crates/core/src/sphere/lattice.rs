use std::f64::consts::PI;

use crate::error::{EstError, Result};
use crate::harmonics::Orientation;

/// `(1 + √5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Golden spiral with `z_s = 1 − (2s−1)/S` and azimuth `2πs / golden`, `s = 1..=S`.
pub fn fibonacci_lattice(s: usize) -> Result<Vec<Orientation>> {
    if s < 4 {
        return Err(EstError::invalid(format!("Fibonacci lattice needs at least 4 points, got {s}")));
    }
    Ok(fibonacci_points(s))
}

pub fn fibonacci_points(s: usize) -> Vec<Orientation> {
    (1..=s)
        .map(|i| {
            let z = 1.0 - (2 * i - 1) as f64 / s as f64;
            let phi = 2.0 * PI * i as f64 / GOLDEN_RATIO;
            let r = (1.0 - z * z).max(0.0).sqrt();
            Orientation::from_direction([r * phi.cos(), r * phi.sin(), z]).expect("unit circle point")
        })
        .collect()
}

/// Equiangular product grid: `θ_i = π(i + ½)/S_θ`, `φ_j = 2πj/S_φ`.
pub fn latlong_points(s_theta: usize, s_phi: usize) -> Result<Vec<Orientation>> {
    if s_theta < 2 || s_phi < 2 {
        return Err(EstError::invalid(format!(
            "lat-long grid needs at least 2×2 points, got {s_theta}×{s_phi}"
        )));
    }
    let mut out = Vec::with_capacity(s_theta * s_phi);
    for i in 0..s_theta {
        let theta = PI * (i as f64 + 0.5) / s_theta as f64;
        for j in 0..s_phi {
            out.push(Orientation::from_angles(theta, 2.0 * PI * j as f64 / s_phi as f64));
        }
    }
    Ok(out)
}

/// Splits `s` into the most nearly square `S_θ × S_φ` with `S_θ ≤ S_φ`.
pub fn latlong_shape(s: usize) -> Result<(usize, usize)> {
    let mut best = None;
    let mut d = 2;
    while d * d <= s {
        if s % d == 0 {
            best = Some((d, s / d));
        }
        d += 1;
    }
    best.ok_or_else(|| EstError::invalid(format!("{s} points do not factor into a lat-long grid")))
}

pub(crate) fn geodesic(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let c = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    c.atan2(dot)
}
