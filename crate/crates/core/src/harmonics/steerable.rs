use super::sh::num_coeffs;
use super::wigner::WignerD;
use crate::error::{EstError, Result};
use crate::tensor::DenseTensor;

/// Steerable features: `(l_max+1)²` coefficient rows by `channels` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerableTensor {
    pub l_max: usize,
    pub coeffs: DenseTensor,
}

impl SteerableTensor {
    pub fn new(l_max: usize, coeffs: DenseTensor) -> Result<Self> {
        if coeffs.shape().len() != 2 || coeffs.rows() != num_coeffs(l_max) {
            return Err(EstError::invalid(format!(
                "steerable tensor of degree {l_max} needs {} rows, got shape {:?}",
                num_coeffs(l_max),
                coeffs.shape()
            )));
        }
        Ok(Self { l_max, coeffs })
    }

    pub fn zeros(l_max: usize, channels: usize) -> Self {
        Self {
            l_max,
            coeffs: DenseTensor::zeros(num_coeffs(l_max), channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.coeffs.cols()
    }

    /// Rows `l²..(l+1)²`.
    pub fn degree(&self, l: usize) -> Result<DenseTensor> {
        if l > self.l_max {
            return Err(EstError::DegreeBound {
                requested: l,
                available: self.l_max,
            });
        }
        self.coeffs.slice(0, l * l, (l + 1) * (l + 1))
    }

    /// Per-degree, per-channel block norms, shape `[l_max+1, channels]`.
    pub fn block_norms(&self) -> DenseTensor {
        let c = self.channels();
        let mut out = DenseTensor::zeros(self.l_max + 1, c);
        for l in 0..=self.l_max {
            for ch in 0..c {
                let s: f64 = (l * l..(l + 1) * (l + 1))
                    .map(|r| self.coeffs.get(r, ch).powi(2))
                    .sum();
                out.set(l, ch, s.sqrt());
            }
        }
        out
    }
}

/// `D(R) x`, applied block by block to every channel.
pub fn rotate_steerable(x: &SteerableTensor, d: &WignerD) -> Result<SteerableTensor> {
    if d.l_max() < x.l_max {
        return Err(EstError::DegreeBound {
            requested: x.l_max,
            available: d.l_max(),
        });
    }
    let c = x.channels();
    let mut out = DenseTensor::zeros(num_coeffs(x.l_max), c);
    for l in 0..=x.l_max {
        let b = d.block(l)?;
        let off = l * l;
        let n = 2 * l + 1;
        for ch in 0..c {
            for i in 0..n {
                let v: f64 = (0..n).map(|j| b[(i, j)] * x.coeffs.get(off + j, ch)).sum();
                out.set(off + i, ch, v);
            }
        }
    }
    SteerableTensor::new(x.l_max, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{random_rotation, wigner_d};
    use crate::rng::seeded_rng;

    #[test]
    fn rotation_preserves_block_norms() {
        let mut rng = seeded_rng(11);
        let mut x = SteerableTensor::zeros(3, 4);
        for (i, v) in x.coeffs.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let d = wigner_d(3, &random_rotation(&mut rng)).unwrap();
        let y = rotate_steerable(&x, &d).unwrap();
        assert!(x.block_norms().max_abs_diff(&y.block_norms()) < 1e-12);
    }

    #[test]
    fn wrong_row_count_is_rejected() {
        assert!(SteerableTensor::new(2, DenseTensor::zeros(8, 3)).is_err());
    }
}
