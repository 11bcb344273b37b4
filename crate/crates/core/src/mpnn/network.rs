use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embed::{radial_basis, sh_edge_embedding};
use super::graph::PointCloudGraph;
use crate::error::{EstError, Result};
use crate::est::{EstConfig, EstLayer, Routing};
use crate::ft::SphericalTransform;
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::nn::{add_scalar, broadcast_rows, Mlp};
use crate::params::{ParamId, ParamStore};
use crate::so3::{DwLinear, EquivariantLayerNorm};
use crate::sphere::GridSpec;
use crate::tape::{Tape, Var};
use crate::tensor::DenseTensor;

/// Hyperparameters of the message-passing network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub l_max: usize,
    pub channels: usize,
    pub heads: usize,
    pub cutoff: f64,
    pub grid: GridSpec,
    pub n_steerable: usize,
    pub n_spherical: usize,
    /// Hidden width of each spherical expert; zero means `4C`.
    pub expert_hidden: usize,
    pub routing: Routing,
    pub orientation_embed: bool,
    pub radial: usize,
    pub readout_hidden: usize,
    /// Size of the species table; codes are atomic numbers below this bound.
    pub species: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            l_max: 2,
            channels: 8,
            heads: 4,
            cutoff: 5.0,
            grid: GridSpec::fl(64),
            n_steerable: 1,
            n_spherical: 1,
            expert_hidden: 0,
            routing: Routing::Dense,
            orientation_embed: true,
            radial: 8,
            readout_hidden: 16,
            species: 10,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 {
            return Err(EstError::invalid("the network needs L ≥ 1"));
        }
        let need = num_coeffs(self.l_max);
        if self.grid.points < need {
            return Err(EstError::invalid(format!(
                "{} grid points cannot resolve degree {} (need {need})",
                self.grid.points, self.l_max
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(EstError::invalid("cutoff must be positive"));
        }
        if self.radial == 0 || self.readout_hidden == 0 || self.species == 0 {
            return Err(EstError::invalid("radial, readout and species sizes must be positive"));
        }
        self.est_config().validate()
    }

    pub fn est_config(&self) -> EstConfig {
        EstConfig {
            l_max: self.l_max,
            channels: self.channels,
            heads: self.heads,
            n_steerable: self.n_steerable,
            n_spherical: self.n_spherical,
            hidden: if self.expert_hidden == 0 { 4 * self.channels } else { self.expert_hidden },
            routing: self.routing,
            orientation_embed: self.orientation_embed,
        }
    }
}

/// Sampling grid and transform for a configuration; optimised grids are cached under `EST_CACHE_DIR`.
pub fn build_transform(config: &ModelConfig) -> Result<SphericalTransform> {
    let dir = std::env::var_os("EST_CACHE_DIR").map(PathBuf::from);
    let grid = config.grid.build_cached(config.l_max, dir.as_deref())?;
    SphericalTransform::new(Arc::new(grid), config.l_max)
}

/// Per-edge message: cross-mode EST layer with queries from the node pair and
/// keys/values from the radially modulated edge harmonics.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBlock {
    pub combine: DwLinear,
    pub lift: DwLinear,
    pub radial: Mlp,
    pub est: EstLayer,
}

impl MessageBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (l, c) = (config.l_max, config.channels);
        Ok(Self {
            combine: DwLinear::new(store, &format!("{name}.combine"), l, 2 * c, c, true, rng),
            lift: DwLinear::new(store, &format!("{name}.lift"), l, 1, c, false, rng),
            radial: Mlp::new(store, &format!("{name}.radial"), config.radial, c, c, rng),
            est: EstLayer::new(store, &format!("{name}.est"), config.est_config(), rng)?,
        })
    }

    /// Keys/values `lift(Y(r̂)) · (1 + MLP(rbf))`, the modulation shared across orders.
    pub fn edge_features(&self, tape: &Tape, sh: &Var, rbf: &Var) -> Result<Var> {
        let lifted = self.lift.forward(tape, sh)?;
        let m = add_scalar(tape, &self.radial.forward(tape, rbf)?, 1.0)?;
        tape.mul(&lifted, &broadcast_rows(tape, &m, lifted.rows())?)
    }

    pub fn forward(&self, tape: &Tape, xi: &Var, xj: &Var, sh: &Var, rbf: &Var, ft: &SphericalTransform) -> Result<Var> {
        let q = self.combine.forward(tape, &tape.concat(&[xi.clone(), xj.clone()], 1)?)?;
        let kv = self.edge_features(tape, sh, rbf)?;
        self.est.forward(tape, &q, Some(&kv), ft)
    }
}

/// `x_i + EST(Σ_j m_ij)`; nodes without neighbours are left unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBlock {
    pub est: EstLayer,
}

impl UpdateBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            est: EstLayer::new(store, &format!("{name}.est"), config.est_config(), rng)?,
        })
    }

    pub fn forward(&self, tape: &Tape, x: &Var, messages: &[Var], ft: &SphericalTransform) -> Result<Var> {
        let Some((first, rest)) = messages.split_first() else {
            return Ok(x.clone());
        };
        let mut agg = first.clone();
        for m in rest {
            agg = tape.add(&agg, m)?;
        }
        tape.add(x, &self.est.forward(tape, &agg, None, ft)?)
    }
}

/// Node features after every layer and the pooled scalar read out at every depth.
#[derive(Debug, Clone)]
pub struct NetworkTrace {
    pub nodes: Vec<Vec<Var>>,
    pub outputs: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkOutput {
    /// Pooled scalar after each layer; the last entry is the network output.
    pub depth_outputs: Vec<f64>,
    #[serde(skip)]
    pub nodes: Vec<SteerableTensor>,
}

impl NetworkOutput {
    pub fn scalar(&self) -> f64 {
        *self.depth_outputs.last().expect("at least one layer")
    }
}

/// Species embedding, stacked message/update layers and a normalised invariant
/// readout shared across depths.
#[derive(Debug, Clone)]
pub struct EstNetwork {
    pub config: ModelConfig,
    pub embed: ParamId,
    pub messages: Vec<MessageBlock>,
    pub updates: Vec<UpdateBlock>,
    pub final_norm: EquivariantLayerNorm,
    pub readout: Mlp,
    pub transform: SphericalTransform,
}

impl EstNetwork {
    pub fn new<R: Rng>(store: &mut ParamStore, config: ModelConfig, rng: &mut R) -> Result<Self> {
        let transform = build_transform(&config)?;
        Self::with_transform(store, config, transform, rng)
    }

    pub fn with_transform<R: Rng>(
        store: &mut ParamStore,
        config: ModelConfig,
        transform: SphericalTransform,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if config.layers == 0 {
            return Err(EstError::invalid("the network needs at least one layer"));
        }
        if transform.l_max != config.l_max {
            return Err(EstError::invalid("transform degree does not match the configuration"));
        }
        let c = config.channels;
        let embed = store.normal("embed", config.species, c, 1.0, rng);
        let mut messages = Vec::with_capacity(config.layers);
        let mut updates = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            messages.push(MessageBlock::new(store, &format!("layer{k}.message"), &config, rng)?);
            updates.push(UpdateBlock::new(store, &format!("layer{k}.update"), &config, rng)?);
        }
        let final_norm = EquivariantLayerNorm::new(store, "final_norm", config.l_max, c);
        let readout = Mlp::new(store, "readout", c * (config.l_max + 1), config.readout_hidden, 1, rng);
        Ok(Self {
            config,
            embed,
            messages,
            updates,
            final_norm,
            readout,
            transform,
        })
    }

    /// Initial features: the species row on degree zero, zeros elsewhere.
    pub fn embed_node(&self, tape: &Tape, species: usize) -> Result<Var> {
        if species >= self.config.species {
            return Err(EstError::invalid(format!(
                "species code {species} is outside the table of {}",
                self.config.species
            )));
        }
        let mut onehot = DenseTensor::zeros(1, self.config.species);
        onehot.set(0, species, 1.0);
        let row = tape.matmul(&tape.constant(onehot), &tape.param(self.embed))?;
        let rest = tape.constant(DenseTensor::zeros(num_coeffs(self.config.l_max) - 1, self.config.channels));
        tape.concat(&[row, rest], 0)
    }

    /// `[x(0), ‖x(1)‖, …, ‖x(L)‖]` as a `[1, (L+1)C]` row.
    pub fn invariants(&self, tape: &Tape, x: &Var) -> Result<Var> {
        let mut parts = vec![tape.slice(x, 0, 0, 1)?];
        for l in 1..=self.config.l_max {
            parts.push(tape.l2norm(&tape.slice(x, 0, l * l, (l + 1) * (l + 1))?, 0)?);
        }
        tape.concat(&parts, 1)
    }

    /// Sum over nodes of the readout of the normalised node features.
    pub fn pool(&self, tape: &Tape, nodes: &[Var]) -> Result<Var> {
        let rows = nodes
            .iter()
            .map(|x| self.invariants(tape, &self.final_norm.forward(tape, x)?))
            .collect::<Result<Vec<_>>>()?;
        let per_node = self.readout.forward(tape, &tape.concat(&rows, 0)?)?;
        tape.sum(&per_node, None)
    }

    pub fn forward(&self, tape: &Tape, graph: &PointCloudGraph) -> Result<NetworkTrace> {
        let ft = &self.transform;
        let edges: Vec<(Var, Var)> = graph
            .edges
            .iter()
            .map(|e| {
                let sh = sh_edge_embedding(e.r, self.config.l_max)?;
                let rbf = radial_basis(e.length.min(self.config.cutoff), self.config.cutoff, self.config.radial)?;
                Ok((tape.constant(sh.coeffs), tape.constant(DenseTensor::row_vector(rbf))))
            })
            .collect::<Result<_>>()?;
        let mut x = graph
            .species
            .iter()
            .map(|&s| self.embed_node(tape, s))
            .collect::<Result<Vec<_>>>()?;
        let mut trace = NetworkTrace {
            nodes: Vec::with_capacity(self.config.layers),
            outputs: Vec::with_capacity(self.config.layers),
        };
        for (msg, upd) in self.messages.iter().zip(&self.updates) {
            let mut inbox: Vec<Vec<Var>> = vec![Vec::new(); x.len()];
            for (e, (sh, rbf)) in graph.edges.iter().zip(&edges) {
                inbox[e.i].push(msg.forward(tape, &x[e.i], &x[e.j], sh, rbf, ft)?);
            }
            x = x
                .iter()
                .zip(&inbox)
                .map(|(xi, m)| upd.forward(tape, xi, m, ft))
                .collect::<Result<_>>()?;
            trace.outputs.push(self.pool(tape, &x)?);
            trace.nodes.push(x.clone());
        }
        Ok(trace)
    }
}

/// Evaluate the network without recording gradients.
pub fn forward_network(store: &ParamStore, net: &EstNetwork, graph: &PointCloudGraph) -> Result<NetworkOutput> {
    let tape = Tape::inference(store);
    let trace = net.forward(&tape, graph)?;
    let nodes = trace
        .nodes
        .last()
        .expect("at least one layer")
        .iter()
        .map(|v| SteerableTensor::new(net.config.l_max, v.to_tensor()))
        .collect::<Result<_>>()?;
    Ok(NetworkOutput {
        depth_outputs: trace.outputs.iter().map(|v| v.value().item()).collect(),
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{random_rotation, rotate_steerable, rotate_vector, wigner_d};
    use crate::mpnn::build_radius_graph;
    use crate::rng::seeded_rng;

    fn small() -> ModelConfig {
        ModelConfig {
            layers: 2,
            l_max: 1,
            channels: 4,
            heads: 2,
            grid: GridSpec::fl(64),
            ..ModelConfig::default()
        }
    }

    fn molecule() -> (Vec<[f64; 3]>, Vec<usize>) {
        (
            vec![[0.0, 0.0, 0.0], [1.1, 0.2, -0.3], [-0.4, 1.3, 0.5], [0.2, -0.9, 1.0]],
            vec![6, 1, 8, 1],
        )
    }

    fn net(config: ModelConfig, seed: u64) -> (ParamStore, EstNetwork) {
        let mut store = ParamStore::new();
        let net = EstNetwork::new(&mut store, config, &mut seeded_rng(seed)).unwrap();
        (store, net)
    }

    #[test]
    fn translation_invariance_is_exact() {
        let (store, net) = net(small(), 1);
        let (pos, sp) = molecule();
        let shifted: Vec<_> = pos.iter().map(|p| [p[0] + 3.0, p[1] - 1.5, p[2] + 0.25]).collect();
        let a = forward_network(&store, &net, &build_radius_graph(&pos, &sp, 5.0).unwrap()).unwrap();
        let b = forward_network(&store, &net, &build_radius_graph(&shifted, &sp, 5.0).unwrap()).unwrap();
        // shifting changes the edge vectors by rounding only
        assert!((a.scalar() - b.scalar()).abs() < 1e-10);
    }

    #[test]
    fn permutation_invariance_of_the_pooled_output() {
        let (store, net) = net(small(), 2);
        let (pos, sp) = molecule();
        let order = [2, 0, 3, 1];
        let pos2: Vec<_> = order.iter().map(|&k| pos[k]).collect();
        let sp2: Vec<_> = order.iter().map(|&k| sp[k]).collect();
        let a = forward_network(&store, &net, &build_radius_graph(&pos, &sp, 5.0).unwrap()).unwrap();
        let b = forward_network(&store, &net, &build_radius_graph(&pos2, &sp2, 5.0).unwrap()).unwrap();
        assert!((a.scalar() - b.scalar()).abs() < 1e-12 * a.scalar().abs().max(1.0));
        for (k, &o) in order.iter().enumerate() {
            assert!(b.nodes[k].coeffs.max_abs_diff(&a.nodes[o].coeffs) < 1e-12);
        }
    }

    #[test]
    fn rotation_changes_the_output_only_slightly() {
        let (store, net) = net(ModelConfig { grid: GridSpec::fl(256), ..small() }, 3);
        let (pos, sp) = molecule();
        let rot = random_rotation(&mut seeded_rng(4));
        let rpos: Vec<_> = pos.iter().map(|p| rotate_vector(&rot, *p)).collect();
        let a = forward_network(&store, &net, &build_radius_graph(&pos, &sp, 5.0).unwrap()).unwrap();
        let b = forward_network(&store, &net, &build_radius_graph(&rpos, &sp, 5.0).unwrap()).unwrap();
        assert!((a.scalar() - b.scalar()).abs() < 1e-2 * a.scalar().abs().max(1.0));
        let d = wigner_d(1, &rot).unwrap();
        let want = rotate_steerable(&a.nodes[0], &d).unwrap();
        assert!(b.nodes[0].coeffs.sub(&want.coeffs).unwrap().frobenius() < 1e-2 * want.coeffs.frobenius());
    }

    #[test]
    fn isolated_atom_keeps_its_embedding() {
        let (store, net) = net(small(), 5);
        let g = build_radius_graph(&[[0.0; 3], [10.0, 0.0, 0.0]], &[6, 1], 5.0).unwrap();
        let out = forward_network(&store, &net, &g).unwrap();
        let tape = Tape::inference(&store);
        let e = net.embed_node(&tape, 6).unwrap();
        assert_eq!(out.nodes[0].coeffs, *e.value());
        assert_eq!(out.depth_outputs.len(), 2);
    }

    #[test]
    fn zero_radial_mlp_makes_messages_distance_free() {
        let mut store = ParamStore::new();
        let block = MessageBlock::new(&mut store, "m", &small(), &mut seeded_rng(6)).unwrap();
        for id in [block.radial.first.w, block.radial.second.w] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let ft = build_transform(&small()).unwrap();
        let tape = Tape::inference(&store);
        let x = tape.constant(DenseTensor::filled(4, 4, 0.3));
        let sh = tape.constant(sh_edge_embedding([0.0, 0.6, 0.8], 1).unwrap().coeffs);
        let near = tape.constant(DenseTensor::row_vector(radial_basis(1.0, 5.0, 8).unwrap()));
        let far = tape.constant(DenseTensor::row_vector(radial_basis(4.0, 5.0, 8).unwrap()));
        let a = block.forward(&tape, &x, &x, &sh, &near, &ft).unwrap();
        let b = block.forward(&tape, &x, &x, &sh, &far, &ft).unwrap();
        assert!(a.value().max_abs_diff(b.value()) < 1e-14);
    }

    #[test]
    fn swapping_endpoints_changes_the_message() {
        let mut store = ParamStore::new();
        let block = MessageBlock::new(&mut store, "m", &small(), &mut seeded_rng(7)).unwrap();
        let ft = build_transform(&small()).unwrap();
        let tape = Tape::inference(&store);
        let mut xi = DenseTensor::zeros(4, 4);
        xi.set(0, 0, 1.0);
        let mut xj = DenseTensor::zeros(4, 4);
        xj.set(0, 1, -0.7);
        let r = [0.3, -0.2, 0.9];
        let rbf = tape.constant(DenseTensor::row_vector(radial_basis(1.0, 5.0, 8).unwrap()));
        let fwd = tape.constant(sh_edge_embedding(r, 1).unwrap().coeffs);
        let back = tape.constant(sh_edge_embedding([-r[0], -r[1], -r[2]], 1).unwrap().coeffs);
        let (xi, xj) = (tape.constant(xi), tape.constant(xj));
        let a = block.forward(&tape, &xi, &xj, &fwd, &rbf, &ft).unwrap();
        let b = block.forward(&tape, &xj, &xi, &back, &rbf, &ft).unwrap();
        assert!(a.value().max_abs_diff(b.value()) > 1e-6);
    }

    #[test]
    fn unknown_species_is_an_error() {
        let (store, net) = net(small(), 8);
        let g = build_radius_graph(&[[0.0; 3]], &[42], 5.0).unwrap();
        assert!(forward_network(&store, &net, &g).is_err());
    }

    #[test]
    fn config_rejects_undersampled_grids() {
        let c = ModelConfig { l_max: 3, grid: GridSpec::fl(10), ..ModelConfig::default() };
        assert!(c.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
