use rand::Rng;

use crate::error::{EstError, Result};
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Per-degree channel mixing `x(l) W(l)`, shared across orders; bias on degree 0 only.
#[derive(Debug, Clone, PartialEq)]
pub struct DwLinear {
    pub l_max: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<ParamId>,
    pub bias: Option<ParamId>,
}

impl DwLinear {
    /// Weights ~ Normal(0, 1/c_in).
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        l_max: usize,
        c_in: usize,
        c_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weights = (0..=l_max)
            .map(|l| store.normal(format!("{name}.w{l}"), c_in, c_out, 1.0 / c_in as f64, rng))
            .collect();
        let bias = bias.then(|| store.constant(format!("{name}.b"), 1, c_out, 0.0));
        Self {
            l_max,
            c_in,
            c_out,
            weights,
            bias,
        }
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        if x.rows() != num_coeffs(self.l_max) || x.cols() != self.c_in {
            return Err(EstError::ShapeMismatch {
                op: "dw_linear",
                left: x.shape().to_vec(),
                right: vec![num_coeffs(self.l_max), self.c_in],
            });
        }
        let mut blocks = Vec::with_capacity(self.l_max + 1);
        for l in 0..=self.l_max {
            let b = tape.slice(x, 0, l * l, (l + 1) * (l + 1))?;
            let mut y = tape.matmul(&b, &tape.param(self.weights[l]))?;
            if l == 0 {
                if let Some(bias) = self.bias {
                    y = tape.add(&y, &tape.param(bias))?;
                }
            }
            blocks.push(y);
        }
        tape.concat(&blocks, 0)
    }

    pub fn apply(&self, store: &ParamStore, x: &SteerableTensor) -> Result<SteerableTensor> {
        let tape = Tape::inference(store);
        let y = self.forward(&tape, &tape.constant(x.coeffs.clone()))?;
        SteerableTensor::new(x.l_max, y.to_tensor())
    }
}
