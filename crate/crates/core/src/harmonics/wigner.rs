use nalgebra::DMatrix;

use super::rotation::{is_rotation, rotate_orientation, Rotation};
use super::sh::{eval_real_sh, num_coeffs};
use crate::error::{EstError, Result};
use crate::sphere::fibonacci_points;

/// Block-diagonal real Wigner-D matrix, one orthogonal block per degree.
#[derive(Debug, Clone)]
pub struct WignerD {
    pub rotation: Rotation,
    blocks: Vec<DMatrix<f64>>,
}

impl WignerD {
    pub fn l_max(&self) -> usize {
        self.blocks.len() - 1
    }

    /// The `(2l+1) × (2l+1)` block for degree `l`.
    pub fn block(&self, l: usize) -> Result<&DMatrix<f64>> {
        self.blocks.get(l).ok_or(EstError::DegreeBound {
            requested: l,
            available: self.l_max(),
        })
    }

    /// Apply to a flattened coefficient vector of length `(l_max+1)²`.
    pub fn apply(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != num_coeffs(self.l_max()) {
            return Err(EstError::invalid(format!(
                "expected {} coefficients, got {}",
                num_coeffs(self.l_max()),
                coeffs.len()
            )));
        }
        let mut out = vec![0.0; coeffs.len()];
        for (l, d) in self.blocks.iter().enumerate() {
            let off = l * l;
            let n = 2 * l + 1;
            for i in 0..n {
                out[off + i] = (0..n).map(|j| d[(i, j)] * coeffs[off + j]).sum();
            }
        }
        Ok(out)
    }
}

/// Wigner-D blocks satisfying `Y(R p) = D(R) Y(p)` for every degree up to `l_max`.
///
/// Each block is the least-squares fit of that identity over a Fibonacci
/// lattice, then projected onto the nearest orthogonal matrix.
pub fn wigner_d(l_max: usize, r: &Rotation) -> Result<WignerD> {
    if !r.iter().all(|v| v.is_finite()) || !is_rotation(r, 1e-10) {
        return Err(EstError::invalid("matrix is not a proper rotation"));
    }
    let m = (4 * (2 * l_max + 1)).max(16);
    let pts = fibonacci_points(m);
    let before: Vec<Vec<f64>> = pts.iter().map(|&p| eval_real_sh(l_max, p)).collect();
    let after: Vec<Vec<f64>> = pts
        .iter()
        .map(|&p| eval_real_sh(l_max, rotate_orientation(r, p)))
        .collect();
    let blocks = (0..=l_max)
        .map(|l| {
            let n = 2 * l + 1;
            let off = l * l;
            let a = DMatrix::from_fn(n, m, |i, k| before[k][off + i]);
            let b = DMatrix::from_fn(n, m, |i, k| after[k][off + i]);
            let gram = &a * a.transpose();
            let inv = gram.try_inverse().expect("lattice spans every degree");
            polar(&(b * a.transpose() * inv))
        })
        .collect();
    Ok(WignerD {
        rotation: *r,
        blocks,
    })
}

fn polar(d: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = d.clone().svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}
