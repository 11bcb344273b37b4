//! Small building blocks shared by the layers: dense maps, MLPs and broadcasting.

use rand::Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// `x W (+ b)` over the last axis of a `[rows, in]` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    /// Weights ~ Normal(0, 1/d_in); bias zero.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.normal(format!("{name}.w"), d_in, d_out, 1.0 / d_in as f64, rng);
        let b = bias.then(|| store.constant(format!("{name}.b"), 1, d_out, 0.0));
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let y = tape.matmul(x, &tape.param(self.w))?;
        match self.b {
            Some(b) => {
                let bb = broadcast_rows(tape, &tape.param(b), x.rows())?;
                tape.add(&y, &bb)
            }
            None => Ok(y),
        }
    }
}

/// Two dense layers with a SiLU between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.0"), d_in, hidden, true, rng),
            second: Linear::new(store, &format!("{name}.1"), hidden, d_out, true, rng),
        }
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let h = tape.silu(&self.first.forward(tape, x)?);
        self.second.forward(tape, &h)
    }
}

pub fn ones(rows: usize, cols: usize) -> DenseTensor {
    DenseTensor::filled(rows, cols, 1.0)
}

/// Repeat a `[1, C]` row `n` times.
pub fn broadcast_rows(tape: &Tape, row: &Var, n: usize) -> Result<Var> {
    if n == 1 {
        return Ok(row.clone());
    }
    tape.matmul(&tape.constant(ones(n, 1)), row)
}

/// Repeat a `[R, 1]` column `n` times.
pub fn broadcast_cols(tape: &Tape, col: &Var, n: usize) -> Result<Var> {
    if n == 1 {
        return Ok(col.clone());
    }
    tape.matmul(col, &tape.constant(ones(1, n)))
}

/// Elementwise reciprocal, via `exp(-log x)`.
pub fn recip(tape: &Tape, x: &Var) -> Var {
    tape.exp(&tape.scale(&tape.log(x), -1.0))
}

/// Adds a constant to every entry.
pub fn add_scalar(tape: &Tape, x: &Var, c: f64) -> Result<Var> {
    tape.add(x, &tape.constant(DenseTensor::new(x.shape().to_vec(), vec![c; x.value().len()])?))
}
