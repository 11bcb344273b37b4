use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::ft::SphericalTransform;
use crate::harmonics::SteerableTensor;
use crate::nn::Linear;
use crate::params::ParamStore;
use crate::so3::{DwLinear, GateActivation};
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// `dw_linear → gate → dw_linear`; exactly equivariant.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerableExpert {
    pub first: DwLinear,
    pub gate: GateActivation,
    pub second: DwLinear,
}

impl SteerableExpert {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, l_max: usize, channels: usize, rng: &mut R) -> Self {
        Self {
            first: DwLinear::new(store, &format!("{name}.in"), l_max, channels, channels, true, rng),
            gate: GateActivation::new(store, &format!("{name}.gate"), l_max, channels, rng),
            second: DwLinear::new(store, &format!("{name}.out"), l_max, channels, channels, true, rng),
        }
    }

    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let h = self.gate.forward(tape, &self.first.forward(tape, x)?)?;
        self.second.forward(tape, &h)
    }

    pub fn apply(&self, store: &ParamStore, x: &SteerableTensor) -> Result<SteerableTensor> {
        let tape = Tape::inference(store);
        let y = self.forward(&tape, &tape.constant(x.coeffs.clone()))?;
        SteerableTensor::new(x.l_max, y.to_tensor())
    }
}

/// Pointwise `W2 · SiLU(W1 · f(p))`, applied independently at every orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalExpert {
    pub first: Linear,
    pub second: Linear,
}

impl SphericalExpert {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.in"), channels, hidden, false, rng),
            second: Linear::new(store, &format!("{name}.out"), hidden, channels, false, rng),
        }
    }

    pub fn forward(&self, tape: &Tape, f: &Var) -> Result<Var> {
        let h = tape.silu(&self.first.forward(tape, f)?);
        self.second.forward(tape, &h)
    }
}

/// Routing rule for the expert gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Routing {
    Dense,
    /// Keep the `k` highest scores within each expert family.
    TopK(usize),
}

/// Softmax over `x(0) W_G`, split into steerable and spherical families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertGate {
    pub w: Linear,
    pub n_steerable: usize,
    pub n_spherical: usize,
    pub routing: Routing,
}

impl ExpertGate {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        n_steerable: usize,
        n_spherical: usize,
        routing: Routing,
        rng: &mut R,
    ) -> Result<Self> {
        let e = n_steerable + n_spherical;
        if e == 0 {
            return Err(EstError::invalid("mixture needs at least one expert"));
        }
        if let Routing::TopK(k) = routing {
            if k == 0 {
                return Err(EstError::invalid("top-K routing needs K ≥ 1"));
            }
        }
        Ok(Self {
            w: Linear::new(store, name, channels, e, false, rng),
            n_steerable,
            n_spherical,
            routing,
        })
    }

    pub fn experts(&self) -> usize {
        self.n_steerable + self.n_spherical
    }

    /// `[1, E]` weights: steerable experts first, then spherical ones.
    /// Dropped experts get zero; kept scores are not renormalised.
    pub fn forward(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let x0 = tape.slice(x, 0, 0, 1)?;
        let s = tape.softmax(&self.w.forward(tape, &x0)?, 1)?;
        match self.routing {
            Routing::Dense => Ok(s),
            Routing::TopK(k) => {
                let scores = s.value().data().to_vec();
                let mut mask = vec![0.0; scores.len()];
                for range in [0..self.n_steerable, self.n_steerable..self.experts()] {
                    let mut idx: Vec<usize> = range.collect();
                    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                    for &i in idx.iter().take(k) {
                        mask[i] = 1.0;
                    }
                }
                tape.mul(&s, &tape.constant(DenseTensor::row_vector(mask)))
            }
        }
    }

    pub fn weights(&self, store: &ParamStore, x: &SteerableTensor) -> Result<Vec<f64>> {
        let tape = Tape::inference(store);
        Ok(self.forward(&tape, &tape.constant(x.coeffs.clone()))?.value().data().to_vec())
    }
}

/// Gated mixture of steerable and spherical experts.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeFfn {
    pub gate: ExpertGate,
    pub steerable: Vec<SteerableExpert>,
    pub spherical: Vec<SphericalExpert>,
}

impl MoeFfn {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        l_max: usize,
        channels: usize,
        n_steerable: usize,
        n_spherical: usize,
        hidden: usize,
        routing: Routing,
        rng: &mut R,
    ) -> Result<Self> {
        let gate = ExpertGate::new(store, &format!("{name}.gate"), channels, n_steerable, n_spherical, routing, rng)?;
        let steerable = (0..n_steerable)
            .map(|i| SteerableExpert::new(store, &format!("{name}.st{i}"), l_max, channels, rng))
            .collect();
        let spherical = (0..n_spherical)
            .map(|i| SphericalExpert::new(store, &format!("{name}.sp{i}"), channels, hidden, rng))
            .collect();
        Ok(Self {
            gate,
            steerable,
            spherical,
        })
    }

    /// `Σ g_i SteerableFFN_i(x) + Σ g_j IFT(SphericalFFN_j(FT(x)))`, without the residual.
    pub fn mix(&self, tape: &Tape, x: &Var, ft: &SphericalTransform) -> Result<Var> {
        let g = self.gate.forward(tape, x)?;
        let mut acc: Option<Var> = None;
        let push = |v: Var, acc: &mut Option<Var>| -> Result<()> {
            *acc = Some(match acc.take() {
                Some(a) => tape.add(&a, &v)?,
                None => v,
            });
            Ok(())
        };
        for (i, e) in self.steerable.iter().enumerate() {
            let gi = tape.slice(&g, 1, i, i + 1)?;
            push(tape.scale_by(&e.forward(tape, x)?, &gi)?, &mut acc)?;
        }
        if !self.spherical.is_empty() {
            let f = ft.forward(tape, x)?;
            let mut sig: Option<Var> = None;
            for (j, e) in self.spherical.iter().enumerate() {
                let k = self.steerable.len() + j;
                let gj = tape.slice(&g, 1, k, k + 1)?;
                push(tape.scale_by(&e.forward(tape, &f)?, &gj)?, &mut sig)?;
            }
            push(ft.inverse(tape, &sig.expect("at least one spherical expert"))?, &mut acc)?;
        }
        Ok(acc.expect("at least one expert"))
    }

    /// `x + mix(x)`.
    pub fn forward(&self, tape: &Tape, x: &Var, ft: &SphericalTransform) -> Result<Var> {
        tape.add(x, &self.mix(tape, x, ft)?)
    }
}

/// One mixture-of-experts stage with its residual, evaluated without recording.
pub fn moe_ffn(store: &ParamStore, moe: &MoeFfn, x: &SteerableTensor, ft: &SphericalTransform) -> Result<SteerableTensor> {
    let tape = Tape::inference(store);
    let y = moe.forward(&tape, &tape.constant(x.coeffs.clone()), ft)?;
    SteerableTensor::new(x.l_max, y.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{num_coeffs, random_rotation, rotate_steerable, wigner_d};
    use crate::rng::seeded_rng;
    use crate::sphere::SphereGrid;
    use std::sync::Arc;

    fn sample(l: usize, c: usize, seed: u64) -> SteerableTensor {
        let n = num_coeffs(l);
        let data = (0..n * c).map(|i| ((i as f64 + 0.3 * seed as f64) * 0.77).sin()).collect();
        SteerableTensor::new(l, DenseTensor::new(vec![n, c], data).unwrap()).unwrap()
    }

    #[test]
    fn zero_gate_matrix_gives_uniform_weights() {
        let mut store = ParamStore::new();
        let g = ExpertGate::new(&mut store, "g", 4, 3, 2, Routing::Dense, &mut seeded_rng(0)).unwrap();
        store.get_mut(g.w.w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        for w in g.weights(&store, &sample(2, 4, 1)).unwrap() {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_is_rotation_invariant() {
        let mut rng = seeded_rng(1);
        let mut store = ParamStore::new();
        let g = ExpertGate::new(&mut store, "g", 4, 2, 2, Routing::Dense, &mut rng).unwrap();
        let x = sample(2, 4, 2);
        let d = wigner_d(2, &random_rotation(&mut rng)).unwrap();
        let a = g.weights(&store, &x).unwrap();
        let b = g.weights(&store, &rotate_steerable(&x, &d).unwrap()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_keeps_k_per_family_without_renormalising() {
        let mut store = ParamStore::new();
        let g = ExpertGate::new(&mut store, "g", 3, 3, 2, Routing::TopK(1), &mut seeded_rng(3)).unwrap();
        let x = sample(1, 3, 4);
        let dense = ExpertGate { routing: Routing::Dense, ..g };
        let s = dense.weights(&store, &x).unwrap();
        let w = g.weights(&store, &x).unwrap();
        assert_eq!(w[..3].iter().filter(|v| **v > 0.0).count(), 1);
        assert_eq!(w[3..].iter().filter(|v| **v > 0.0).count(), 1);
        let best = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(w[best], s[best]);
    }

    #[test]
    fn steerable_expert_is_equivariant() {
        let mut rng = seeded_rng(5);
        let mut store = ParamStore::new();
        let e = SteerableExpert::new(&mut store, "e", 2, 3, &mut rng);
        let x = sample(2, 3, 6);
        let d = wigner_d(2, &random_rotation(&mut rng)).unwrap();
        let a = e.apply(&store, &rotate_steerable(&x, &d).unwrap()).unwrap();
        let b = rotate_steerable(&e.apply(&store, &x).unwrap(), &d).unwrap();
        assert!(a.coeffs.max_abs_diff(&b.coeffs) < 1e-9);
    }

    #[test]
    fn steerable_expert_keeps_zero_higher_degrees_at_zero() {
        let mut store = ParamStore::new();
        let e = SteerableExpert::new(&mut store, "e", 2, 3, &mut seeded_rng(7));
        let y = e.apply(&store, &SteerableTensor::zeros(2, 3)).unwrap();
        assert_eq!(y.coeffs.slice(0, 1, 9).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn spherical_expert_is_pointwise() {
        let mut store = ParamStore::new();
        let e = SphericalExpert::new(&mut store, "s", 2, 8, &mut seeded_rng(8));
        let tape = Tape::inference(&store);
        let y = e.forward(&tape, &tape.constant(DenseTensor::filled(5, 2, 0.4))).unwrap();
        for s in 1..5 {
            assert_eq!(y.value().get(s, 0), y.value().get(0, 0));
            assert_eq!(y.value().get(s, 1), y.value().get(0, 1));
        }
        store.set_all(0.0);
        let tape = Tape::inference(&store);
        let y = e.forward(&tape, &tape.constant(DenseTensor::filled(5, 2, 0.4))).unwrap();
        assert_eq!(y.value().max_abs(), 0.0);
    }

    #[test]
    fn steerable_only_mixture_is_exactly_equivariant() {
        let mut rng = seeded_rng(9);
        let mut store = ParamStore::new();
        let moe = MoeFfn::new(&mut store, "m", 2, 4, 2, 0, 16, Routing::Dense, &mut rng).unwrap();
        let ft = SphericalTransform::new(Arc::new(SphereGrid::fibonacci(32, 2).unwrap()), 2).unwrap();
        let x = sample(2, 4, 10);
        let d = wigner_d(2, &random_rotation(&mut rng)).unwrap();
        let a = moe_ffn(&store, &moe, &rotate_steerable(&x, &d).unwrap(), &ft).unwrap();
        let b = rotate_steerable(&moe_ffn(&store, &moe, &x, &ft).unwrap(), &d).unwrap();
        assert!(a.coeffs.max_abs_diff(&b.coeffs) < 1e-9);
    }

    #[test]
    fn gate_forced_to_steerable_matches_expert_plus_residual() {
        let mut rng = seeded_rng(11);
        let mut store = ParamStore::new();
        let moe = MoeFfn::new(&mut store, "m", 1, 2, 1, 1, 8, Routing::Dense, &mut rng).unwrap();
        // a huge positive logit on expert 0 via the scalar channel
        *store.get_mut(moe.gate.w.w) = DenseTensor::from_rows(&[vec![1e3, -1e3], vec![0.0, 0.0]]).unwrap();
        let ft = SphericalTransform::new(Arc::new(SphereGrid::fibonacci(16, 1).unwrap()), 1).unwrap();
        let mut x = sample(1, 2, 12);
        x.coeffs.set(0, 0, 1.0);
        let got = moe_ffn(&store, &moe, &x, &ft).unwrap();
        let want = moe.steerable[0].apply(&store, &x).unwrap().coeffs.add(&x.coeffs).unwrap();
        assert!(got.coeffs.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn empty_mixture_is_rejected() {
        let mut store = ParamStore::new();
        assert!(ExpertGate::new(&mut store, "g", 2, 0, 0, Routing::Dense, &mut seeded_rng(0)).is_err());
    }
}
