use crate::error::Result;
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::nn::{add_scalar, broadcast_rows, recip};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Divides each degree by `√(mean_c ‖x(l)_c‖² + ε)` and applies a per-degree, per-channel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantLayerNorm {
    pub l_max: usize,
    pub channels: usize,
    pub scales: Vec<ParamId>,
}

impl EquivariantLayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, l_max: usize, channels: usize) -> Self {
        let scales = (0..=l_max)
            .map(|l| store.constant(format!("{name}.s{l}"), 1, channels, 1.0))
            .collect();
        Self {
            l_max,
            channels,
            scales,
        }
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let mut blocks = Vec::with_capacity(self.l_max + 1);
        for l in 0..=self.l_max {
            let b = tape.slice(x, 0, l * l, (l + 1) * (l + 1))?;
            let ms = tape.scale(&tape.sum(&tape.mul(&b, &b)?, None)?, 1.0 / self.channels as f64);
            let inv = recip(tape, &tape.sqrt(&add_scalar(tape, &ms, LAYER_NORM_EPS)?));
            let nb = tape.scale_by(&b, &inv)?;
            let s = broadcast_rows(tape, &tape.param(self.scales[l]), 2 * l + 1)?;
            blocks.push(tape.mul(&nb, &s)?);
        }
        tape.concat(&blocks, 0)
    }

    pub fn apply(&self, store: &ParamStore, x: &SteerableTensor) -> Result<SteerableTensor> {
        debug_assert_eq!(x.coeffs.rows(), num_coeffs(self.l_max));
        let tape = Tape::inference(store);
        let y = self.forward(&tape, &tape.constant(x.coeffs.clone()))?;
        SteerableTensor::new(x.l_max, y.to_tensor())
    }
}
