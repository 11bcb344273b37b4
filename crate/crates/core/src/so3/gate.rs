use rand::Rng;

use crate::error::Result;
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::nn::{broadcast_rows, Mlp};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

/// Scalars pass through SiLU; every higher degree is scaled per channel by an
/// invariant `MLP([x(0), Σ_l ‖x(l)‖])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivation {
    pub l_max: usize,
    pub channels: usize,
    pub mlp: Mlp,
}

impl GateActivation {
    /// Hidden width `C`; the output bias starts at one.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, l_max: usize, channels: usize, rng: &mut R) -> Self {
        let mlp = Mlp::new(store, name, 2 * channels, channels, channels, rng);
        if let Some(b) = mlp.second.b {
            store.get_mut(b).data_mut().iter_mut().for_each(|v| *v = 1.0);
        }
        Self { l_max, channels, mlp }
    }

    /// The invariant `[1, C]` scale.
    pub fn invariant_scale(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let x0 = tape.slice(x, 0, 0, 1)?;
        let mut norms = tape.constant(crate::tensor::DenseTensor::zeros(1, self.channels));
        for l in 1..=self.l_max {
            let b = tape.slice(x, 0, l * l, (l + 1) * (l + 1))?;
            norms = tape.add(&norms, &tape.l2norm(&b, 0)?)?;
        }
        self.mlp.forward(tape, &tape.concat(&[x0, norms], 1)?)
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let x0 = tape.slice(x, 0, 0, 1)?;
        let act = tape.silu(&x0);
        if self.l_max == 0 {
            return Ok(act);
        }
        let scale = self.invariant_scale(tape, x)?;
        let n = num_coeffs(self.l_max) - 1;
        let higher = tape.slice(x, 0, 1, n + 1)?;
        let gated = tape.mul(&higher, &broadcast_rows(tape, &scale, n)?)?;
        tape.concat(&[act, gated], 0)
    }

    pub fn apply(&self, store: &ParamStore, x: &SteerableTensor) -> Result<SteerableTensor> {
        let tape = Tape::inference(store);
        let y = self.forward(&tape, &tape.constant(x.coeffs.clone()))?;
        SteerableTensor::new(x.l_max, y.to_tensor())
    }
}
