use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::harmonics::{random_rotation, rotate_vector};
use crate::mpnn::{build_radius_graph, forward_network, EstNetwork, ModelConfig, Molecule};
use crate::params::ParamStore;
use crate::rng::{derive_seed, seeded_rng};
use crate::sphere::GridSpec;

/// Synthetic point clouds standing in for small molecules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudConfig {
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Standard deviation of each coordinate, Å.
    pub position_sd: f64,
    /// Species codes drawn uniformly.
    pub species: Vec<usize>,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            min_atoms: 5,
            max_atoms: 20,
            position_sd: 2.0,
            species: vec![1, 6, 7, 8, 9],
        }
    }
}

impl CloudConfig {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Molecule> {
        if self.min_atoms == 0 || self.min_atoms > self.max_atoms || self.species.is_empty() {
            return Err(EstError::invalid("cloud sizes or species list are inconsistent"));
        }
        let normal = Normal::new(0.0, self.position_sd)
            .map_err(|e| EstError::invalid(format!("position spread: {e}")))?;
        let n = rng.gen_range(self.min_atoms..=self.max_atoms);
        let positions = (0..n)
            .map(|_| [normal.sample(rng), normal.sample(rng), normal.sample(rng)])
            .collect();
        let species = (0..n).map(|_| self.species[rng.gen_range(0..self.species.len())]).collect();
        Ok(Molecule {
            comment: String::new(),
            species,
            positions,
        })
    }
}

/// One audit campaign: a fixed untrained network evaluated on rotated copies of many inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub model: ModelConfig,
    pub samples: usize,
    pub rotations: usize,
    pub cloud: CloudConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                layers: 6,
                ..ModelConfig::default()
            },
            samples: 1000,
            rotations: 1,
            cloud: CloudConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub grid: GridSpec,
    pub layers: usize,
    pub samples: usize,
    pub rotations: usize,
    pub seed: u64,
    /// Mean `|y|` per depth; the unit-output normalisation divides by it.
    pub output_scale: Vec<f64>,
    /// `mean |y − ŷ| / mean |y|` per depth.
    pub mean_abs_error: Vec<f64>,
    /// `mean |y − ŷ|` per depth, in raw output units.
    pub raw_mean_abs_error: Vec<f64>,
    /// `mean |y − ŷ| / (|y| + 1e-8)` per depth.
    pub mean_relative_error: Vec<f64>,
}

impl AuditReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("grid,depth,samples,rotations,mean_abs_error,raw_mean_abs_error,mean_relative_error,output_scale\n");
        for d in 0..self.layers {
            out.push_str(&format!(
                "{},{},{},{},{:e},{:e},{:e},{:e}\n",
                self.grid.label(),
                d + 1,
                self.samples,
                self.rotations,
                self.mean_abs_error[d],
                self.raw_mean_abs_error[d],
                self.mean_relative_error[d],
                self.output_scale[d]
            ));
        }
        out
    }
}

/// Rotation error of an untrained network.
///
/// Network parameters come from `derive_seed(seed, 0)`; sample `s` draws its
/// cloud and rotations from `derive_seed(seed, s + 1)`. When `inputs` is given,
/// sample `s` uses `inputs[s % inputs.len()]` instead of a synthetic cloud.
pub fn equivariance_audit(config: &AuditConfig, seed: u64, inputs: Option<&[Molecule]>) -> Result<AuditReport> {
    if config.samples == 0 || config.rotations == 0 {
        return Err(EstError::invalid("the audit needs at least one sample and one rotation"));
    }
    if inputs.is_some_and(|m| m.is_empty()) {
        return Err(EstError::invalid("no input molecules"));
    }
    let mut store = ParamStore::new();
    let net = EstNetwork::new(&mut store, config.model, &mut seeded_rng(derive_seed(seed, 0)))?;
    let layers = config.model.layers;
    let cutoff = config.model.cutoff;
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..config.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeded_rng(derive_seed(seed, s as u64 + 1));
            let mol = match inputs {
                Some(ms) => ms[s % ms.len()].clone(),
                None => config.cloud.sample(&mut rng)?,
            };
            let y = forward_network(&store, &net, &build_radius_graph(&mol.positions, &mol.species, cutoff)?)?;
            let mut diffs = vec![0.0; layers];
            for _ in 0..config.rotations {
                let rot = random_rotation(&mut rng);
                let pos: Vec<_> = mol.positions.iter().map(|p| rotate_vector(&rot, *p)).collect();
                let yr = forward_network(&store, &net, &build_radius_graph(&pos, &mol.species, cutoff)?)?;
                for (d, (a, b)) in y.depth_outputs.iter().zip(&yr.depth_outputs).enumerate() {
                    diffs[d] += (a - b).abs();
                }
            }
            Ok((y.depth_outputs, diffs))
        })
        .collect::<Result<_>>()?;
    let m = (config.samples * config.rotations) as f64;
    let mut scale = vec![0.0; layers];
    let mut raw = vec![0.0; layers];
    let mut rel = vec![0.0; layers];
    for (y, diffs) in &per_sample {
        for d in 0..layers {
            scale[d] += y[d].abs() / config.samples as f64;
            raw[d] += diffs[d] / m;
            rel[d] += diffs[d] / (y[d].abs() + 1e-8) / m;
        }
    }
    Ok(AuditReport {
        grid: config.model.grid,
        layers,
        samples: config.samples,
        rotations: config.rotations,
        seed,
        mean_abs_error: raw.iter().zip(&scale).map(|(r, s)| r / s).collect(),
        raw_mean_abs_error: raw,
        mean_relative_error: rel,
        output_scale: scale,
    })
}
