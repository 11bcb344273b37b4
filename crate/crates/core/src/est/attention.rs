use std::sync::Arc;

use rand::Rng;

use crate::error::{EstError, Result};
use crate::ft::SphericalSignal;
use crate::nn::Linear;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// Multi-head attention whose tokens are grid orientations.
///
/// Queries and keys are projected pointwise, optionally extended by `β·p`,
/// and compared with a `1/√d_head` scaled inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalAttention {
    pub channels: usize,
    pub heads: usize,
    pub orientation_embed: bool,
    /// Restrict every orientation to attend only to itself.
    pub local_only: bool,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    /// Learnable gain on the orientation embedding, `[1, 1]`, initialised to one.
    pub beta: ParamId,
}

impl SphericalAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        heads: usize,
        orientation_embed: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(EstError::invalid(format!("{channels} channels do not split into {heads} heads")));
        }
        Ok(Self {
            channels,
            heads,
            orientation_embed,
            local_only: false,
            q: Linear::new(store, &format!("{name}.q"), channels, channels, false, rng),
            k: Linear::new(store, &format!("{name}.k"), channels, channels, false, rng),
            v: Linear::new(store, &format!("{name}.v"), channels, channels, false, rng),
            o: Linear::new(store, &format!("{name}.o"), channels, channels, false, rng),
            beta: store.constant(format!("{name}.beta"), 1, 1, 1.0),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    /// Scaled per-head logits `[S_q, S_k]`, before masking and softmax.
    pub fn logits(&self, tape: &Tape, fq: &Var, fk: &Var, pq: &DenseTensor, pk: &DenseTensor) -> Result<Vec<Var>> {
        let q = self.q.forward(tape, fq)?;
        let k = self.k.forward(tape, fk)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (eq, ek) = if self.orientation_embed {
            let beta = tape.param(self.beta);
            (
                Some(tape.scale_by(&tape.constant(pq.clone()), &beta)?),
                Some(tape.scale_by(&tape.constant(pk.clone()), &beta)?),
            )
        } else {
            (None, None)
        };
        (0..self.heads)
            .map(|h| {
                let mut qh = tape.slice(&q, 1, h * dh, (h + 1) * dh)?;
                let mut kh = tape.slice(&k, 1, h * dh, (h + 1) * dh)?;
                if let (Some(a), Some(b)) = (&eq, &ek) {
                    qh = tape.concat(&[qh, a.clone()], 1)?;
                    kh = tape.concat(&[kh, b.clone()], 1)?;
                }
                tape.matmul(&tape.scale(&qh, scale), &tape.transpose(&kh)?)
            })
            .collect()
    }

    /// Attention output `[S_q, C]` together with each head's `[S_q, S_k]` weights.
    pub fn forward_with_maps(
        &self,
        tape: &Tape,
        fq: &Var,
        fk: &Var,
        fv: &Var,
        pq: &DenseTensor,
        pk: &DenseTensor,
    ) -> Result<(Var, Vec<Var>)> {
        if fk.rows() != fv.rows() {
            return Err(EstError::ShapeMismatch {
                op: "spherical_attention",
                left: fk.shape().to_vec(),
                right: fv.shape().to_vec(),
            });
        }
        let mask = if self.local_only {
            if fq.rows() != fk.rows() {
                return Err(EstError::invalid("local attention needs queries and keys on one grid"));
            }
            let n = fq.rows();
            let mut m = DenseTensor::filled(n, n, -1e300);
            for i in 0..n {
                m.set(i, i, 0.0);
            }
            Some(tape.constant(m))
        } else {
            None
        };
        let logits = self.logits(tape, fq, fk, pq, pk)?;
        let v = self.v.forward(tape, fv)?;
        let dh = self.head_dim();
        let mut outs = Vec::with_capacity(self.heads);
        let mut maps = Vec::with_capacity(self.heads);
        for (h, mut logit) in logits.into_iter().enumerate() {
            if let Some(m) = &mask {
                logit = tape.add(&logit, m)?;
            }
            let a = tape.softmax(&logit, 1)?;
            outs.push(tape.matmul(&a, &tape.slice(&v, 1, h * dh, (h + 1) * dh)?)?);
            maps.push(a);
        }
        let cat = if outs.len() == 1 {
            outs.pop().expect("one head")
        } else {
            tape.concat(&outs, 1)?
        };
        Ok((self.o.forward(tape, &cat)?, maps))
    }

    pub fn forward(
        &self,
        tape: &Tape,
        fq: &Var,
        fk: &Var,
        fv: &Var,
        pq: &DenseTensor,
        pk: &DenseTensor,
    ) -> Result<Var> {
        Ok(self.forward_with_maps(tape, fq, fk, fv, pq, pk)?.0)
    }
}

/// Attention over signals; `k` and `v` must share a grid.
pub fn spherical_attention(
    store: &ParamStore,
    attn: &SphericalAttention,
    q: &SphericalSignal,
    k: &SphericalSignal,
    v: &SphericalSignal,
) -> Result<SphericalSignal> {
    if !Arc::ptr_eq(k.grid(), v.grid()) && k.grid() != v.grid() {
        return Err(EstError::invalid("keys and values live on different grids"));
    }
    let tape = Tape::inference(store);
    let out = attn.forward(
        &tape,
        &tape.constant(q.values().clone()),
        &tape.constant(k.values().clone()),
        &tape.constant(v.values().clone()),
        &q.grid().point_matrix(),
        &k.grid().point_matrix(),
    )?;
    SphericalSignal::new(Arc::clone(q.grid()), out.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::Orientation;
    use crate::rng::seeded_rng;
    use crate::sphere::SphereGrid;

    fn signal(grid: &Arc<SphereGrid>, c: usize, f: impl Fn(usize, usize) -> f64) -> SphericalSignal {
        let s = grid.len();
        let data = (0..s * c).map(|i| f(i / c, i % c)).collect();
        SphericalSignal::new(Arc::clone(grid), DenseTensor::new(vec![s, c], data).unwrap()).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let mut store = ParamStore::new();
        let attn = SphericalAttention::new(&mut store, "a", 4, 2, true, &mut seeded_rng(1)).unwrap();
        let g = Arc::new(SphereGrid::fibonacci(30, 1).unwrap());
        let f = signal(&g, 4, |s, c| ((s * 7 + c) as f64).sin());
        let tape = Tape::inference(&store);
        let x = tape.constant(f.values().clone());
        let p = g.point_matrix();
        let (_, maps) = attn.forward_with_maps(&tape, &x, &x, &x, &p, &p).unwrap();
        for m in maps {
            let sums = m.value().sum_axis(Some(1)).unwrap();
            for v in sums.data() {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_point_returns_projected_value() {
        let mut store = ParamStore::new();
        let attn = SphericalAttention::new(&mut store, "a", 2, 1, true, &mut seeded_rng(2)).unwrap();
        let p = Orientation::new([0.0, 0.0, 1.0]).unwrap();
        let g = Arc::new(SphereGrid::new(vec![p], 0, crate::sphere::Provenance::Fl).unwrap());
        let f = signal(&g, 2, |_, c| c as f64 + 0.5);
        let out = spherical_attention(&store, &attn, &f, &f, &f).unwrap();
        let tape = Tape::inference(&store);
        let want = attn.o.forward(&tape, &attn.v.forward(&tape, &tape.constant(f.values().clone())).unwrap()).unwrap();
        assert!(out.values().max_abs_diff(want.value()) < 1e-15);
    }

    #[test]
    fn constant_keys_without_embedding_give_uniform_weights() {
        let mut store = ParamStore::new();
        let attn = SphericalAttention::new(&mut store, "a", 2, 2, false, &mut seeded_rng(3)).unwrap();
        let g = Arc::new(SphereGrid::fibonacci(10, 1).unwrap());
        let q = signal(&g, 2, |s, _| s as f64);
        let k = signal(&g, 2, |_, _| 1.0);
        let tape = Tape::inference(&store);
        let p = g.point_matrix();
        let (_, maps) = attn
            .forward_with_maps(&tape, &tape.constant(q.values().clone()), &tape.constant(k.values().clone()), &tape.constant(k.values().clone()), &p, &p)
            .unwrap();
        for v in maps[0].value().data() {
            assert!((v - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_term_is_beta_squared_cosine() {
        let mut store = ParamStore::new();
        let attn = SphericalAttention::new(&mut store, "a", 1, 1, true, &mut seeded_rng(4)).unwrap();
        *store.get_mut(attn.beta) = DenseTensor::scalar(1.5);
        let pts = vec![Orientation::new([0.0, 0.0, 1.0]).unwrap(), Orientation::new([0.0, 0.0, -1.0]).unwrap()];
        let g = Arc::new(SphereGrid::new(pts, 0, crate::sphere::Provenance::Fl).unwrap());
        let zero = signal(&g, 1, |_, _| 0.0);
        let tape = Tape::inference(&store);
        let x = tape.constant(zero.values().clone());
        let p = g.point_matrix();
        let (_, maps) = attn.forward_with_maps(&tape, &x, &x, &x, &p, &p).unwrap();
        // logits are +β² on the diagonal and -β² off it
        let e = (2.0 * 2.25f64).exp();
        assert!((maps[0].value().get(0, 0) - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn local_attention_is_pointwise() {
        let mut store = ParamStore::new();
        let mut attn = SphericalAttention::new(&mut store, "a", 2, 2, true, &mut seeded_rng(5)).unwrap();
        attn.local_only = true;
        let g = Arc::new(SphereGrid::fibonacci(12, 1).unwrap());
        let f = signal(&g, 2, |s, c| ((s + 3 * c) as f64).cos());
        let out = spherical_attention(&store, &attn, &f, &f, &f).unwrap();
        let tape = Tape::inference(&store);
        let want = attn.o.forward(&tape, &attn.v.forward(&tape, &tape.constant(f.values().clone())).unwrap()).unwrap();
        assert!(out.values().max_abs_diff(want.value()) < 1e-14);
    }

    #[test]
    fn heads_must_divide_channels() {
        let mut store = ParamStore::new();
        assert!(SphericalAttention::new(&mut store, "a", 6, 4, true, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn mismatched_key_value_grids_are_rejected() {
        let mut store = ParamStore::new();
        let attn = SphericalAttention::new(&mut store, "a", 2, 1, true, &mut seeded_rng(0)).unwrap();
        let g1 = Arc::new(SphereGrid::fibonacci(10, 1).unwrap());
        let g2 = Arc::new(SphereGrid::fibonacci(12, 1).unwrap());
        let a = signal(&g1, 2, |_, _| 1.0);
        let b = signal(&g2, 2, |_, _| 1.0);
        assert!(spherical_attention(&store, &attn, &a, &a, &b).is_err());
    }
}
