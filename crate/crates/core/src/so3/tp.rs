use super::cg::CgTable;
use crate::error::{EstError, Result};
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// Channel-wise Clebsch-Gordan product, `out(l,m)_c = Σ w(l1,l2,l) C(l1 m1, l2 m2 | l m) u(l1,m1)_c v(l2,m2)_c`.
///
/// Evaluated as `M · ((A u) ∘ (B v))`, where `A` and `B` select the factors of
/// every coefficient pair and `M` holds the weighted coupling coefficients.
#[derive(Debug, Clone)]
pub struct TensorProduct {
    pub l1_max: usize,
    pub l2_max: usize,
    pub l_out: usize,
    sel_u: DenseTensor,
    sel_v: DenseTensor,
    coupling: DenseTensor,
}

impl TensorProduct {
    /// Unit path weights.
    pub fn new(l1_max: usize, l2_max: usize, l_out: usize) -> Self {
        Self::with_path_weights(l1_max, l2_max, l_out, |_, _, _| 1.0)
    }

    pub fn with_path_weights(
        l1_max: usize,
        l2_max: usize,
        l_out: usize,
        weight: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let (n1, n2, n) = (num_coeffs(l1_max), num_coeffs(l2_max), num_coeffs(l_out));
        let mut sel_u = DenseTensor::zeros(n1 * n2, n1);
        let mut sel_v = DenseTensor::zeros(n1 * n2, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                sel_u.set(i * n2 + j, i, 1.0);
                sel_v.set(i * n2 + j, j, 1.0);
            }
        }
        let table = CgTable::shared(l1_max, l2_max, l_out);
        let mut coupling = DenseTensor::zeros(n, n1 * n2);
        for e in &table.entries {
            let (o, a, b, v) = (
                e.l * e.l + (e.l as i64 + e.m) as usize,
                e.l1 * e.l1 + (e.l1 as i64 + e.m1) as usize,
                e.l2 * e.l2 + (e.l2 as i64 + e.m2) as usize,
                e.value,
            );
            let cur = coupling.get(o, a * n2 + b);
            coupling.set(o, a * n2 + b, cur + weight(e.l1, e.l2, e.l) * v);
        }
        Self {
            l1_max,
            l2_max,
            l_out,
            sel_u,
            sel_v,
            coupling,
        }
    }

    /// The `[(l_out+1)², (l1+1)²(l2+1)²]` coupling matrix.
    pub fn coupling(&self) -> &DenseTensor {
        &self.coupling
    }

    pub fn forward(&self, tape: &Tape, u: &Var, v: &Var) -> Result<Var> {
        if u.cols() != v.cols() {
            return Err(EstError::ShapeMismatch {
                op: "cg_tensor_product",
                left: u.shape().to_vec(),
                right: v.shape().to_vec(),
            });
        }
        let pu = tape.matmul(&tape.constant(self.sel_u.clone()), u)?;
        let pv = tape.matmul(&tape.constant(self.sel_v.clone()), v)?;
        tape.matmul(&tape.constant(self.coupling.clone()), &tape.mul(&pu, &pv)?)
    }

    pub fn apply(&self, u: &SteerableTensor, v: &SteerableTensor) -> Result<SteerableTensor> {
        if u.l_max != self.l1_max || v.l_max != self.l2_max {
            return Err(EstError::DegreeBound {
                requested: u.l_max.max(v.l_max),
                available: self.l1_max.min(self.l2_max),
            });
        }
        let tape = Tape::detached();
        let y = self.forward(&tape, &tape.constant(u.coeffs.clone()), &tape.constant(v.coeffs.clone()))?;
        SteerableTensor::new(self.l_out, y.to_tensor())
    }
}

/// Unit-weight channel-wise product of two steerable tensors, truncated at `l_out`.
pub fn cg_tensor_product(u: &SteerableTensor, v: &SteerableTensor, l_out: usize) -> Result<SteerableTensor> {
    if u.channels() != v.channels() {
        return Err(EstError::ShapeMismatch {
            op: "cg_tensor_product",
            left: u.coeffs.shape().to_vec(),
            right: v.coeffs.shape().to_vec(),
        });
    }
    TensorProduct::new(u.l_max, v.l_max, l_out).apply(u, v)
}
