use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::est::Routing;
use crate::harmonics::{rotate_vector, rotation_about_z, SteerableTensor};
use crate::mpnn::{build_radius_graph, radial_basis, sh_edge_embedding, EstNetwork, ModelConfig};
use crate::nn::{ones, Linear};
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::rng::{derive_seed, seeded_rng};
use crate::so3::TensorProduct;
use crate::sphere::GridSpec;
use crate::tape::Tape;
use crate::tensor::DenseTensor;

const CENTRE_SPECIES: usize = 6;
const RING_SPECIES: usize = 1;
const CUTOFF: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    /// One EST message layer read out on the sphere.
    Est,
    /// One Clebsch-Gordan message layer read out as coefficients.
    Tp,
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Probe::Est => "est",
            Probe::Tp => "tp",
        })
    }
}

impl FromStr for Probe {
    type Err = EstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "est" => Ok(Probe::Est),
            "tp" => Ok(Probe::Tp),
            other => Err(EstError::invalid(format!("unknown probe {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotSymConfig {
    pub fold: usize,
    pub degree: usize,
    pub probe: Probe,
    pub seeds: usize,
    pub steps: usize,
    pub lr: f64,
    /// Training copies per class.
    pub train_copies: usize,
    pub test_samples: usize,
    /// Stop once training accuracy has been perfect for this many steps.
    pub patience: usize,
    pub channels: usize,
    pub heads: usize,
    pub grid: GridSpec,
}

impl Default for RotSymConfig {
    fn default() -> Self {
        Self {
            fold: 3,
            degree: 1,
            probe: Probe::Est,
            seeds: 10,
            steps: 2000,
            lr: 1e-3,
            train_copies: 16,
            test_samples: 512,
            patience: 100,
            channels: 8,
            heads: 4,
            grid: GridSpec::fl(64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotSymResult {
    pub fold: usize,
    pub degree: usize,
    pub probe: Probe,
    pub seed: u64,
    pub accuracies: Vec<f64>,
    pub steps_run: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

impl RotSymResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("probe,fold,degree,seed_index,accuracy,steps\n");
        for (k, (a, s)) in self.accuracies.iter().zip(&self.steps_run).enumerate() {
            out.push_str(&format!("{},{},{},{k},{a},{s}\n", self.probe, self.fold, self.degree));
        }
        out
    }
}

/// A centre atom with `fold` neighbours at unit distance, evenly spaced in the
/// xy-plane. Class B is class A turned by `π/fold` about z; `turn` applies the
/// structure's own symmetry `2π·turn/fold` on top.
pub fn star(fold: usize, class_b: bool, turn: usize) -> (Vec<[f64; 3]>, Vec<usize>) {
    let offset = if class_b { PI / fold as f64 } else { 0.0 };
    let sym = rotation_about_z(2.0 * PI * turn as f64 / fold as f64);
    let mut pos = vec![[0.0; 3]];
    let mut species = vec![CENTRE_SPECIES];
    for k in 0..fold {
        let phi = 2.0 * PI * k as f64 / fold as f64 + offset;
        pos.push(rotate_vector(&sym, [phi.cos(), phi.sin(), 0.0]));
        species.push(RING_SPECIES);
    }
    (pos, species)
}

/// Frozen feature map of the centre atom.
struct FeatureMap {
    store: ParamStore,
    net: EstNetwork,
    probe: Probe,
}

impl FeatureMap {
    fn new(config: &RotSymConfig, seed: u64) -> Result<Self> {
        let model = ModelConfig {
            layers: 1,
            l_max: config.degree,
            channels: config.channels,
            heads: config.heads,
            cutoff: CUTOFF,
            grid: config.grid,
            n_steerable: 0,
            n_spherical: 1,
            routing: Routing::Dense,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::new();
        let net = EstNetwork::new(&mut store, model, &mut seeded_rng(seed))?;
        Ok(Self {
            store,
            net,
            probe: config.probe,
        })
    }

    /// EST: the aggregated spatial attention output, then the pointwise spherical
    /// expert, flattened over `S × C`. TP: `Σ_j Y(r̂_ij) ⊗ x_j`, flattened over
    /// `(L+1)² × C`.
    fn features(&self, pos: &[[f64; 3]], species: &[usize]) -> Result<Vec<f64>> {
        let graph = build_radius_graph(pos, species, CUTOFF)?;
        let tape = Tape::inference(&self.store);
        let net = &self.net;
        let cfg = &net.config;
        let x: Vec<_> = species.iter().map(|&s| net.embed_node(&tape, s)).collect::<Result<_>>()?;
        let mut acc: Option<DenseTensor> = None;
        match self.probe {
            Probe::Est => {
                let msg = &net.messages[0];
                let est = &msg.est;
                let ft = &net.transform;
                let p = ft.grid.point_matrix();
                for e in graph.neighbours(0) {
                    let sh = tape.constant(sh_edge_embedding(e.r, cfg.l_max)?.coeffs);
                    let rbf = tape.constant(DenseTensor::row_vector(radial_basis(e.length, CUTOFF, cfg.radial)?));
                    let q = msg.combine.forward(&tape, &tape.concat(&[x[0].clone(), x[e.j].clone()], 1)?)?;
                    let kv = msg.edge_features(&tape, &sh, &rbf)?;
                    let fq = ft.forward(&tape, &est.norm_attn.forward(&tape, &q)?)?;
                    let fkv = ft.forward(&tape, &est.norm_kv.forward(&tape, &kv)?)?;
                    let a = est.attn.forward(&tape, &fq, &fkv, &fkv, &p, &p)?.to_tensor();
                    acc = Some(match acc {
                        Some(t) => t.add(&a)?,
                        None => a,
                    });
                }
                let agg = tape.constant(acc.ok_or_else(|| EstError::invalid("centre has no neighbours"))?);
                let out = tape.add(&agg, &est.moe.spherical[0].forward(&tape, &agg)?)?;
                Ok(out.to_tensor().into_data())
            }
            Probe::Tp => {
                let tp = TensorProduct::new(cfg.l_max, cfg.l_max, cfg.l_max);
                for e in graph.neighbours(0) {
                    let y = sh_edge_embedding(e.r, cfg.l_max)?.coeffs.matmul(&ones(1, cfg.channels))?;
                    let y = SteerableTensor::new(cfg.l_max, y)?;
                    let xj = SteerableTensor::new(cfg.l_max, x[e.j].to_tensor())?;
                    let m = tp.apply(&y, &xj)?.coeffs;
                    acc = Some(match acc {
                        Some(t) => t.add(&m)?,
                        None => m,
                    });
                }
                Ok(acc.ok_or_else(|| EstError::invalid("centre has no neighbours"))?.into_data())
            }
        }
    }
}

/// Per-feature standardisation; features whose spread is below `1e-10·(1 + |mean|)` are zeroed as noise.
fn standardise(train: &[Vec<f64>], rows: &[Vec<f64>]) -> DenseTensor {
    let f = train[0].len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; f];
    let mut sd = vec![0.0; f];
    for row in train {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    for row in train {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let data = rows
        .iter()
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), s)| {
                    let sd = s.sqrt();
                    if sd < 1e-10 * (1.0 + m.abs()) {
                        0.0
                    } else {
                        (v - m) / sd
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    DenseTensor::new(vec![rows.len(), f], data).expect("shape")
}

fn accuracy(z: &DenseTensor, labels: &[bool]) -> f64 {
    let hits = labels.iter().enumerate().filter(|(i, &b)| (z.get(*i, 0) > 0.0) == b).count();
    hits as f64 / labels.len() as f64
}

/// Logistic head trained with Adam on the training rows; returns test accuracy and steps used.
fn train_head<R: Rng>(
    x_train: &DenseTensor,
    y_train: &[bool],
    x_test: &DenseTensor,
    y_test: &[bool],
    config: &RotSymConfig,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let mut store = ParamStore::new();
    let head = Linear::new(&mut store, "head", x_train.cols(), 1, true, rng);
    let onehot = DenseTensor::from_rows(
        &y_train
            .iter()
            .map(|&b| if b { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect::<Vec<_>>(),
    )?;
    let zeros = DenseTensor::zeros(x_train.rows(), 1);
    let mut adam = Adam::new(config.lr);
    let mut perfect = 0;
    let mut steps = 0;
    while steps < config.steps {
        let tape = Tape::new(&store);
        let z = head.forward(&tape, &tape.constant(x_train.clone()))?;
        if accuracy(z.value(), y_train) == 1.0 {
            perfect += 1;
            if perfect >= config.patience {
                break;
            }
        } else {
            perfect = 0;
        }
        // binary cross-entropy as a two-way softmax over [0, z]
        let p = tape.softmax(&tape.concat(&[tape.constant(zeros.clone()), z], 1)?, 1)?;
        let picked = tape.sum(&tape.mul(&p, &tape.constant(onehot.clone()))?, Some(1))?;
        let loss = tape.scale(&tape.mean(&tape.log(&picked), None)?, -1.0);
        let grads = tape.backward(&loss)?;
        adam.step(&mut store, grads.params());
        steps += 1;
    }
    let tape = Tape::inference(&store);
    let z = head.forward(&tape, &tape.constant(x_test.clone()))?;
    Ok((accuracy(z.value(), y_test), steps))
}

fn run_seed(config: &RotSymConfig, seed: u64) -> Result<(f64, usize)> {
    let map = FeatureMap::new(config, derive_seed(seed, 0))?;
    let mut rng = seeded_rng(derive_seed(seed, 1));
    let draw = |n: usize, rng: &mut crate::rng::EstRng| -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let class_b = k % 2 == 1;
            let (pos, sp) = star(config.fold, class_b, rng.gen_range(0..config.fold));
            rows.push(map.features(&pos, &sp)?);
            labels.push(class_b);
        }
        Ok((rows, labels))
    };
    let (train, y_train) = draw(2 * config.train_copies, &mut rng)?;
    let (test, y_test) = draw(config.test_samples, &mut rng)?;
    let x_train = standardise(&train, &train);
    let x_test = standardise(&train, &test);
    train_head(&x_train, &y_train, &x_test, &y_test, config, &mut rng)
}

/// Whether one layer of the chosen probe can tell an `n`-fold star from its
/// `π/n` turn, judged in a fixed frame.
///
/// Each seed draws fresh layer weights and trains only a logistic head on the
/// frozen centre features. Training and test copies are the two classes turned
/// by random elements of their own symmetry group.
pub fn rotsym_benchmark(config: &RotSymConfig, seed: u64) -> Result<RotSymResult> {
    if config.fold < 2 {
        return Err(EstError::invalid(format!("fold must be at least 2, got {}", config.fold)));
    }
    if config.seeds < 2 {
        return Err(EstError::invalid("at least two seeds are needed for a spread"));
    }
    if config.degree == 0 || config.train_copies == 0 || config.test_samples == 0 {
        return Err(EstError::invalid("degree, training copies and test samples must be positive"));
    }
    let runs: Vec<(f64, usize)> = (0..config.seeds as u64)
        .into_par_iter()
        .map(|s| run_seed(config, derive_seed(seed, s)))
        .collect::<Result<_>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    Ok(RotSymResult {
        fold: config.fold,
        degree: config.degree,
        probe: config.probe,
        seed,
        steps_run: runs.iter().map(|r| r.1).collect(),
        accuracies,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(probe: Probe, fold: usize, degree: usize) -> RotSymConfig {
        RotSymConfig {
            fold,
            degree,
            probe,
            seeds: 2,
            steps: 400,
            lr: 1e-2,
            train_copies: 4,
            test_samples: 16,
            ..RotSymConfig::default()
        }
    }

    #[test]
    fn star_geometry() {
        let (a, s) = star(4, false, 0);
        assert_eq!(a.len(), 5);
        assert_eq!(s[0], CENTRE_SPECIES);
        for p in &a[1..] {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-15);
        }
        let (b, _) = star(4, true, 0);
        assert!((b[1][0] - (PI / 4.0).cos()).abs() < 1e-15);
        let (t, _) = star(4, false, 1);
        assert!((t[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_product_sees_folds_up_to_its_degree() {
        assert!(rotsym_benchmark(&quick(Probe::Tp, 2, 2), 1).unwrap().mean > 0.99);
        let blind = rotsym_benchmark(&quick(Probe::Tp, 3, 2), 1).unwrap();
        assert!(blind.accuracies.iter().all(|&a| a == 0.5), "{:?}", blind.accuracies);
    }

    #[test]
    fn est_separates_a_threefold_star_at_degree_one() {
        let r = rotsym_benchmark(&quick(Probe::Est, 3, 1), 2).unwrap();
        assert!(r.mean > 0.99, "{:?}", r.accuracies);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(rotsym_benchmark(&quick(Probe::Tp, 1, 1), 0).is_err());
        assert!(rotsym_benchmark(&RotSymConfig { seeds: 1, ..quick(Probe::Tp, 3, 1) }, 0).is_err());
        assert!("xyz".parse::<Probe>().is_err());
        assert_eq!("est".parse::<Probe>().unwrap(), Probe::Est);
    }
}
