//! Dense row-major `f64` tensors.
//!
//! Every kernel here is rank-2; scalars are `[1, 1]` tensors. The
//! differentiable wrappers live in [`crate::tape`].

use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(EstError::ShapeMismatch {
                op: "new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(EstError::invalid("ragged rows"));
        }
        Ok(Self {
            shape: vec![r, c],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn col_vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_rank2(&self, op: &'static str) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(EstError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: vec![],
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &DenseTensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(EstError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &DenseTensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseTensor> {
        self.check_same(other, op)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> DenseTensor {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &DenseTensor) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_rank2("matmul")?;
        other.check_rank2("matmul")?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(EstError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        if n <= 4 && k >= 32 {
            return self.matmul_nt(&other.transpose()?);
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let a_row = &self.data[i * k..(i + 1) * k];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ` without materialising the transpose.
    pub fn matmul_nt(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_rank2("matmul_nt")?;
        other.check_rank2("matmul_nt")?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, k2) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(EstError::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = dot(a, b);
            }
        }
        Ok(DenseTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn matmul_tn(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_rank2("matmul_tn")?;
        other.check_rank2("matmul_tn")?;
        let (k, m) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(EstError::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o = &mut out[i * n..(i + 1) * n];
                for (x, &b) in o.iter_mut().zip(b_row) {
                    *x += a * b;
                }
            }
        }
        Ok(DenseTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<DenseTensor> {
        self.check_rank2("transpose")?;
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(DenseTensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn concat(parts: &[&DenseTensor], axis: usize) -> Result<DenseTensor> {
        let first = parts
            .first()
            .ok_or_else(|| EstError::invalid("concat of zero tensors"))?;
        first.check_rank2("concat")?;
        let other_axis = 1 - axis.min(1);
        for p in parts {
            p.check_rank2("concat")?;
            if p.shape[other_axis] != first.shape[other_axis] || axis > 1 {
                return Err(EstError::ShapeMismatch {
                    op: "concat",
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
        }
        if axis == 0 {
            let rows = parts.iter().map(|p| p.shape[0]).sum();
            let mut data = Vec::with_capacity(rows * first.shape[1]);
            for p in parts {
                data.extend_from_slice(&p.data);
            }
            Ok(DenseTensor {
                shape: vec![rows, first.shape[1]],
                data,
            })
        } else {
            let rows = first.shape[0];
            let cols: usize = parts.iter().map(|p| p.shape[1]).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    let c = p.shape[1];
                    data.extend_from_slice(&p.data[r * c..(r + 1) * c]);
                }
            }
            Ok(DenseTensor {
                shape: vec![rows, cols],
                data,
            })
        }
    }

    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<DenseTensor> {
        self.check_rank2("slice")?;
        if axis > 1 || start > end || end > self.shape[axis] {
            return Err(EstError::ShapeMismatch {
                op: "slice",
                left: self.shape.clone(),
                right: vec![axis, start, end],
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        if axis == 0 {
            Ok(DenseTensor {
                shape: vec![end - start, c],
                data: self.data[start * c..end * c].to_vec(),
            })
        } else {
            let w = end - start;
            let mut data = Vec::with_capacity(r * w);
            for i in 0..r {
                data.extend_from_slice(&self.data[i * c + start..i * c + end]);
            }
            Ok(DenseTensor {
                shape: vec![r, w],
                data,
            })
        }
    }

    /// Sum over `axis` (keeping it with extent 1), or over everything when `None`.
    pub fn sum_axis(&self, axis: Option<usize>) -> Result<DenseTensor> {
        self.check_rank2("sum")?;
        let (r, c) = (self.shape[0], self.shape[1]);
        match axis {
            None => Ok(DenseTensor::scalar(self.data.iter().sum())),
            Some(0) => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(&self.data[i * c..(i + 1) * c]) {
                        *o += v;
                    }
                }
                Ok(DenseTensor::row_vector(out))
            }
            Some(1) => Ok(DenseTensor::col_vector(
                (0..r)
                    .map(|i| self.data[i * c..(i + 1) * c].iter().sum())
                    .collect(),
            )),
            Some(_) => Err(EstError::invalid("axis out of range")),
        }
    }

    pub fn softmax(&self, axis: usize) -> Result<DenseTensor> {
        self.check_rank2("softmax")?;
        let (r, c) = (self.shape[0], self.shape[1]);
        if self.shape[axis.min(1)] == 0 || axis > 1 {
            return Err(EstError::ShapeMismatch {
                op: "softmax",
                left: self.shape.clone(),
                right: vec![axis],
            });
        }
        let mut out = self.data.clone();
        if axis == 1 {
            for row in out.chunks_mut(c) {
                softmax_in_place(row);
            }
        } else {
            let mut col = vec![0.0; r];
            for j in 0..c {
                for i in 0..r {
                    col[i] = out[i * c + j];
                }
                softmax_in_place(&mut col);
                for i in 0..r {
                    out[i * c + j] = col[i];
                }
            }
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    pub fn l2norm(&self, axis: usize) -> Result<DenseTensor> {
        let sq = self.map(|v| v * v).sum_axis(Some(axis))?;
        Ok(sq.map(f64::sqrt))
    }
}

/// `exp(x)` for `x ≤ 0`, branch-free so that loops over it vectorise.
///
/// Arguments below `-708` return `exp(-708)`; the relative error elsewhere is
/// a few ulp.
#[inline(always)]
pub(crate) fn exp_nonpositive(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 0.693_147_180_369_123_8;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.max(-708.0);
    let shifted = x * std::f64::consts::LOG2_E + MAGIC;
    let k = shifted - MAGIC;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let p = 1.0 / 6_227_020_800.0;
    let p = p * r + 1.0 / 479_001_600.0;
    let p = p * r + 1.0 / 39_916_800.0;
    let p = p * r + 1.0 / 3_628_800.0;
    let p = p * r + 1.0 / 362_880.0;
    let p = p * r + 1.0 / 40_320.0;
    let p = p * r + 1.0 / 5_040.0;
    let p = p * r + 1.0 / 720.0;
    let p = p * r + 1.0 / 120.0;
    let p = p * r + 1.0 / 24.0;
    let p = p * r + 1.0 / 6.0;
    let p = p * r + 0.5;
    let p = p * r + 1.0;
    let p = p * r + 1.0;
    let bits = shifted.to_bits().wrapping_sub(MAGIC.to_bits()).wrapping_add(1023) << 52;
    p * f64::from_bits(bits)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in v.iter_mut() {
        *x = exp_nonpositive(*x - max);
    }
    let inv = 1.0 / lane_sum(v);
    for x in v.iter_mut() {
        *x *= inv;
    }
}

/// Dot product with four interleaved accumulators, in a fixed order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sum with four interleaved accumulators, in a fixed order.
fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = v.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for (a, x) in acc.iter_mut().zip(c) {
            *a += x;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
