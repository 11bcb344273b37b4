use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::est::{EstConfig, EstLayer, MoeFfn, Routing, SphericalAttention};
use crate::ft::SphericalTransform;
use crate::harmonics::num_coeffs;
use crate::mpnn::{build_radius_graph, build_transform, EstNetwork, MessageBlock, ModelConfig, UpdateBlock};
use crate::params::ParamStore;
use crate::rng::seeded_rng;
use crate::so3::{DwLinear, EquivariantLayerNorm, GateActivation};
use crate::sphere::{GridSpec, SphereGrid};
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub tensors: usize,
    pub entries: usize,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub entries_per_tensor: usize,
    pub blocks: Vec<BlockCheck>,
    pub max_relative_deviation: f64,
}

impl GradcheckReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("block,tensors,entries,max_relative_deviation\n");
        for b in &self.blocks {
            out.push_str(&format!("{},{},{},{:e}\n", b.block, b.tensors, b.entries, b.max_relative_deviation));
        }
        out
    }
}

/// `|a − n| / max(|a|, |n|, 1e-5)`.
pub fn relative_deviation(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Compares tape gradients of `loss` with central differences for up to
/// `per_tensor` randomly chosen entries of every parameter in `store`.
pub fn check_block<R: Rng>(
    name: &str,
    store: &mut ParamStore,
    loss: impl Fn(&Tape) -> Result<Var>,
    per_tensor: usize,
    rng: &mut R,
) -> Result<BlockCheck> {
    let analytic = {
        let tape = Tape::new(store);
        let l = loss(&tape)?;
        tape.backward(&l)?.params().clone()
    };
    let ids: Vec<_> = store.ids().collect();
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for id in &ids {
        let len = store.get(*id).len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..len)).collect()
        };
        for k in picks {
            let orig = store.get(*id).data()[k];
            let mut eval = |v: f64| -> Result<f64> {
                store.get_mut(*id).data_mut()[k] = v;
                let tape = Tape::inference(store);
                Ok(loss(&tape)?.value().item())
            };
            let plus = eval(orig + FD_STEP)?;
            let minus = eval(orig - FD_STEP)?;
            store.get_mut(*id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_deviation(a, numeric));
            entries += 1;
        }
    }
    Ok(BlockCheck {
        block: name.to_string(),
        tensors: ids.len(),
        entries,
        max_relative_deviation: worst,
    })
}

fn random<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseTensor {
    DenseTensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
}

/// Projects a block output onto fixed random weights so the loss mixes every entry.
fn probe_loss(tape: &Tape, out: &Var, weights: &DenseTensor) -> Result<Var> {
    tape.sum(&tape.mul(out, &tape.constant(weights.clone()))?, None)
}

/// Settings of the gradient suite; sizes are kept small so every block is cheap to difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub l_max: usize,
    pub channels: usize,
    pub heads: usize,
    pub points: usize,
    pub entries_per_tensor: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            l_max: 1,
            channels: 4,
            heads: 2,
            points: 16,
            entries_per_tensor: 6,
        }
    }
}

/// Finite-difference validation of every parameterised block.
pub fn gradcheck_suite<R: Rng>(config: &GradcheckConfig, rng: &mut R) -> Result<GradcheckReport> {
    let (l, c) = (config.l_max, config.channels);
    let n = num_coeffs(l);
    let per = config.entries_per_tensor;
    let grid = Arc::new(SphereGrid::fibonacci(config.points, l)?);
    let ft = SphericalTransform::new(Arc::clone(&grid), l)?;
    let p = grid.point_matrix();
    let x = random(n, c, rng);
    let y = random(n, c, rng);
    let w = random(n, c, rng);
    let ws = random(config.points, c, rng);
    let est_cfg = EstConfig {
        heads: config.heads,
        n_steerable: 2,
        n_spherical: 2,
        routing: Routing::Dense,
        ..EstConfig::new(l, c)
    };
    let mut blocks = Vec::new();

    let mut s = ParamStore::new();
    let b = DwLinear::new(&mut s, "dw", l, c, c, true, rng);
    blocks.push(check_block("dw_linear", &mut s, |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()))?, &w), per, rng)?);

    let mut s = ParamStore::new();
    let b = GateActivation::new(&mut s, "gate", l, c, rng);
    blocks.push(check_block("gate_activation", &mut s, |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()))?, &w), per, rng)?);

    let mut s = ParamStore::new();
    let b = EquivariantLayerNorm::new(&mut s, "ln", l, c);
    for id in s.ids().collect::<Vec<_>>() {
        s.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
    }
    blocks.push(check_block("layer_norm", &mut s, |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()))?, &w), per, rng)?);

    let mut s = ParamStore::new();
    let b = SphericalAttention::new(&mut s, "attn", c, config.heads, true, rng)?;
    let fx = ft.forward_matrix().matmul(&x)?;
    let fy = ft.forward_matrix().matmul(&y)?;
    blocks.push(check_block(
        "spherical_attention",
        &mut s,
        |t| {
            let out = b.forward(t, &t.constant(fx.clone()), &t.constant(fy.clone()), &t.constant(fy.clone()), &p, &p)?;
            probe_loss(t, &out, &ws)
        },
        per,
        rng,
    )?);

    let mut s = ParamStore::new();
    let b = MoeFfn::new(&mut s, "moe", l, c, 2, 2, 4 * c, Routing::Dense, rng)?;
    blocks.push(check_block("moe_ffn", &mut s, |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()), &ft)?, &w), per, rng)?);

    let mut s = ParamStore::new();
    let b = EstLayer::new(&mut s, "est", est_cfg, rng)?;
    blocks.push(check_block("est_layer_self", &mut s, |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()), None, &ft)?, &w), per, rng)?);
    blocks.push(check_block(
        "est_layer_cross",
        &mut s,
        |t| probe_loss(t, &b.forward(t, &t.constant(x.clone()), Some(&t.constant(y.clone())), &ft)?, &w),
        per,
        rng,
    )?);

    let model = ModelConfig {
        layers: 2,
        l_max: l,
        channels: c,
        heads: config.heads,
        grid: GridSpec::fl(config.points),
        radial: 4,
        readout_hidden: 8,
        ..ModelConfig::default()
    };
    let mut s = ParamStore::new();
    let b = MessageBlock::new(&mut s, "msg", &model, rng)?;
    let sh = crate::mpnn::sh_edge_embedding([0.4, -0.3, 0.8], l)?.coeffs;
    let rbf = DenseTensor::row_vector(crate::mpnn::radial_basis(1.2, model.cutoff, model.radial)?);
    blocks.push(check_block(
        "message_block",
        &mut s,
        |t| {
            let out = b.forward(t, &t.constant(x.clone()), &t.constant(y.clone()), &t.constant(sh.clone()), &t.constant(rbf.clone()), &ft)?;
            probe_loss(t, &out, &w)
        },
        per,
        rng,
    )?);

    let mut s = ParamStore::new();
    let b = UpdateBlock::new(&mut s, "upd", &model, rng)?;
    blocks.push(check_block(
        "update_block",
        &mut s,
        |t| {
            let msgs = [t.constant(y.clone()), t.constant(w.clone())];
            probe_loss(t, &b.forward(t, &t.constant(x.clone()), &msgs, &ft)?, &w)
        },
        per,
        rng,
    )?);

    let mut s = ParamStore::new();
    let net = EstNetwork::with_transform(&mut s, model, build_transform(&model)?, &mut seeded_rng(rng.gen()))?;
    let graph = build_radius_graph(&[[0.0; 3], [0.9, 0.3, -0.2], [-0.4, 1.0, 0.6]], &[6, 1, 8], model.cutoff)?;
    blocks.push(check_block(
        "network_readout",
        &mut s,
        |t| {
            let trace = net.forward(t, &graph)?;
            let mut total = trace.outputs[0].clone();
            for o in &trace.outputs[1..] {
                total = t.add(&total, o)?;
            }
            Ok(total)
        },
        per,
        rng,
    )?);

    let max = blocks.iter().map(|b| b.max_relative_deviation).fold(0.0, f64::max);
    Ok(GradcheckReport {
        step: FD_STEP,
        entries_per_tensor: per,
        blocks,
        max_relative_deviation: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_deviation_floor() {
        assert_eq!(relative_deviation(0.0, 0.0), 0.0);
        assert!((relative_deviation(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_input_gradient() {
        let mut store = ParamStore::new();
        let b = DwLinear::new(&mut store, "dw", 1, 3, 3, false, &mut seeded_rng(0));
        store.set_all(0.0);
        let tape = Tape::new(&store);
        let x = tape.leaf(DenseTensor::filled(4, 3, 0.7));
        let loss = tape.sum(&b.forward(&tape, &x).unwrap(), None).unwrap();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut store = ParamStore::new();
        let id = store.constant("p", 1, 1, 0.5);
        // the loss reads the parameter through a constant copy, so the tape sees no dependence
        let r = check_block(
            "broken",
            &mut store,
            |t| {
                let v = t.param(id).value().clone();
                Ok(t.sum(&t.mul(&t.param(id), &t.constant(v))?, None)?)
            },
            4,
            &mut seeded_rng(1),
        )
        .unwrap();
        assert!(r.max_relative_deviation > 0.1);
    }

    #[test]
    fn every_block_matches_finite_differences() {
        let r = gradcheck_suite(&GradcheckConfig::default(), &mut seeded_rng(2)).unwrap();
        for b in &r.blocks {
            assert!(b.max_relative_deviation < 1e-4, "{}: {}", b.block, b.max_relative_deviation);
        }
        assert_eq!(r.blocks.len(), 10);
    }
}
