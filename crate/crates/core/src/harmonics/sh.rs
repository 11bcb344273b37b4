use std::f64::consts::PI;

use crate::error::{EstError, Result};
use crate::tensor::DenseTensor;

const UNIT_TOL: f64 = 1e-10;

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    p: [f64; 3],
}

impl Orientation {
    /// Rejects vectors whose norm differs from one by more than 1e-10.
    pub fn new(p: [f64; 3]) -> Result<Self> {
        let n = norm3(p);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(EstError::invalid(format!("orientation {p:?} has norm {n}")));
        }
        Ok(Self { p })
    }

    /// Normalises a non-zero direction.
    pub fn from_direction(v: [f64; 3]) -> Result<Self> {
        let n = norm3(v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(EstError::invalid(format!("cannot normalise {v:?}")));
        }
        Ok(Self {
            p: [v[0] / n, v[1] / n, v[2] / n],
        })
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            p: [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()],
        }
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.p
    }

    /// Polar angle in `[0, π]`.
    pub fn theta(&self) -> f64 {
        self.p[2].clamp(-1.0, 1.0).acos()
    }

    /// Azimuth in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        let a = self.p[1].atan2(self.p[0]);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn num_coeffs(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

pub fn lm_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// All real harmonics up to `l_max` at `p`, flattened by [`lm_index`].
///
/// Uses `Y(l,0) = K(l,0) Q(l,0)`, `Y(l,m) = √2 K(l,m) Q(l,m) Re (x+iy)^m` and
/// `Y(l,-m) = √2 K(l,m) Q(l,m) Im (x+iy)^m`, where `Q(l,m) = P(l,m) / sin^m θ`
/// is evaluated by the three-term recurrence in `z`.
pub fn eval_real_sh(l_max: usize, p: Orientation) -> Vec<f64> {
    let mut out = vec![0.0; num_coeffs(l_max)];
    fill_sh(l_max, p.p, &mut out);
    out
}

fn fill_sh(l_max: usize, p: [f64; 3], out: &mut [f64]) {
    let [x, y, z] = p;
    // cos/sin parts of (x + iy)^m
    let mut cm = vec![0.0; l_max + 1];
    let mut sm = vec![0.0; l_max + 1];
    cm[0] = 1.0;
    for m in 1..=l_max {
        cm[m] = x * cm[m - 1] - y * sm[m - 1];
        sm[m] = x * sm[m - 1] + y * cm[m - 1];
    }
    let mut q_mm = 1.0;
    for m in 0..=l_max {
        if m > 0 {
            q_mm *= (2 * m - 1) as f64;
        }
        let mut q_prev2 = 0.0;
        let mut q_prev = q_mm;
        for l in m..=l_max {
            let q = if l == m {
                q_mm
            } else if l == m + 1 {
                (2 * m + 1) as f64 * z * q_mm
            } else {
                ((2 * l - 1) as f64 * z * q_prev - (l + m - 1) as f64 * q_prev2) / (l - m) as f64
            };
            if l > m {
                q_prev2 = q_prev;
                q_prev = q;
            }
            let k = norm_k(l, m);
            if m == 0 {
                out[lm_index(l, 0)] = k * q;
            } else {
                let s = std::f64::consts::SQRT_2 * k * q;
                out[lm_index(l, m as i64)] = s * cm[m];
                out[lm_index(l, -(m as i64))] = s * sm[m];
            }
        }
    }
}

fn norm_k(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a running product to stay in range
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// `[points.len(), (l_max+1)²]` matrix of harmonics, one row per point.
pub fn sh_matrix(l_max: usize, points: &[Orientation]) -> DenseTensor {
    let n = num_coeffs(l_max);
    let mut data = vec![0.0; points.len() * n];
    for (row, p) in data.chunks_exact_mut(n).zip(points) {
        fill_sh(l_max, p.p, row);
    }
    DenseTensor::new(vec![points.len(), n], data).expect("shape")
}
