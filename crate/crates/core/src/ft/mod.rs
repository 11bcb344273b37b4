//! Discrete spherical Fourier transform between steerable coefficients and
//! sampled signals.
//!
//! The forward map evaluates `f(p_s) = Σ x(l,m) Y(l,m)(p_s)`; the inverse uses
//! the grid's conjugate weights, `x(l,m) = λ(l,m) Σ_s f(p_s) Y(l,m)(p_s)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::sphere::SphereGrid;
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// Per-channel samples on a grid, `S × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSignal {
    grid: Arc<SphereGrid>,
    values: DenseTensor,
}

impl SphericalSignal {
    pub fn new(grid: Arc<SphereGrid>, values: DenseTensor) -> Result<Self> {
        if values.shape().len() != 2 || values.rows() != grid.len() {
            return Err(EstError::invalid(format!(
                "signal of shape {:?} does not match a grid of {} points",
                values.shape(),
                grid.len()
            )));
        }
        if !values.is_finite() {
            return Err(EstError::invalid("signal has non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DenseTensor {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }
}

/// Transform matrices for one grid at degree `l`, ready for use on a tape.
#[derive(Debug, Clone)]
pub struct SphericalTransform {
    pub grid: Arc<SphereGrid>,
    pub l_max: usize,
    /// `S × (l+1)²`.
    forward: DenseTensor,
    /// `(l+1)² × S`, rows scaled by `λ(l,m)`.
    inverse: DenseTensor,
}

impl SphericalTransform {
    pub fn new(grid: Arc<SphereGrid>, l_max: usize) -> Result<Self> {
        if l_max > grid.l_max() {
            return Err(EstError::DegreeBound {
                requested: l_max,
                available: grid.l_max(),
            });
        }
        let n = num_coeffs(l_max);
        let forward = grid.y_matrix().slice(1, 0, n)?;
        let mut inverse = forward.transpose()?;
        for (k, &w) in grid.weights()[..n].iter().enumerate() {
            for s in 0..grid.len() {
                inverse.set(k, s, inverse.get(k, s) * w);
            }
        }
        Ok(Self {
            grid,
            l_max,
            forward,
            inverse,
        })
    }

    pub fn points(&self) -> usize {
        self.grid.len()
    }

    pub fn forward_matrix(&self) -> &DenseTensor {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &DenseTensor {
        &self.inverse
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        tape.matmul(&tape.constant(self.forward.clone()), x)
    }

    pub fn inverse(&self, tape: &Tape, f: &Var) -> Result<Var> {
        tape.matmul(&tape.constant(self.inverse.clone()), f)
    }
}

pub fn forward_ft(x: &SteerableTensor, grid: &Arc<SphereGrid>) -> Result<SphericalSignal> {
    let t = SphericalTransform::new(Arc::clone(grid), x.l_max)?;
    SphericalSignal::new(Arc::clone(grid), t.forward.matmul(&x.coeffs)?)
}

pub fn inverse_ft(f: &SphericalSignal, l_out: usize) -> Result<SteerableTensor> {
    let t = SphericalTransform::new(Arc::clone(&f.grid), l_out)?;
    SteerableTensor::new(l_out, t.inverse.matmul(&f.values)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub l_max: usize,
    pub points: usize,
    pub trials: usize,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

/// Relative L2 error of `inverse_ft(forward_ft(x))` over random single-channel `x`
/// with coefficients uniform in `[-1, 1]`.
pub fn roundtrip_report<R: Rng>(l_max: usize, grid: &Arc<SphereGrid>, trials: usize, rng: &mut R) -> Result<RoundtripReport> {
    let n = num_coeffs(l_max);
    let t = SphericalTransform::new(Arc::clone(grid), l_max)?;
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = DenseTensor::col_vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let back = t.inverse.matmul(&t.forward.matmul(&x)?)?;
        errs.push(back.sub(&x)?.frobenius() / x.frobenius());
    }
    Ok(RoundtripReport {
        l_max,
        points: grid.len(),
        trials,
        mean_relative_error: errs.iter().sum::<f64>() / trials.max(1) as f64,
        max_relative_error: errs.iter().copied().fold(0.0, f64::max),
    })
}

/// Whether `S ≥ (2L)²`.
pub fn nyquist_check(l_max: usize, s: usize) -> (bool, String) {
    let need = 4 * l_max * l_max;
    if s >= need {
        (true, format!("{s} points cover degree {l_max} (need {need})"))
    } else {
        (false, format!("{s} points are below the {need} needed for degree {l_max}"))
    }
}
