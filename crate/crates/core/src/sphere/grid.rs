use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lattice::{fibonacci_lattice, latlong_points, latlong_shape};
use super::repulsion::{repulsion_optimize, RepulsionConfig};
use crate::error::{EstError, Result};
use crate::harmonics::{lm_index, sh_matrix, Orientation};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Fl,
    FlOptimized,
    Latlong,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Fl => "fl",
            Provenance::FlOptimized => "fl-optimized",
            Provenance::Latlong => "latlong",
        })
    }
}

impl FromStr for Provenance {
    type Err = EstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fl" => Ok(Provenance::Fl),
            "fl-optimized" => Ok(Provenance::FlOptimized),
            "latlong" => Ok(Provenance::Latlong),
            other => Err(EstError::invalid(format!("unknown grid provenance {other:?}"))),
        }
    }
}

/// Sample orientations with their harmonic matrix and conjugate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    provenance: Provenance,
    l_max: usize,
    points: Vec<Orientation>,
    y: DenseTensor,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(points: Vec<Orientation>, l_max: usize, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(EstError::invalid("grid has no points"));
        }
        let y = sh_matrix(l_max, &points);
        let weights = conjugate_weights(&y)?;
        Ok(Self {
            provenance,
            l_max,
            points,
            y,
            weights,
        })
    }

    pub fn fibonacci(s: usize, l_max: usize) -> Result<Self> {
        Self::new(fibonacci_lattice(s)?, l_max, Provenance::Fl)
    }

    pub fn latlong(s_theta: usize, s_phi: usize, l_max: usize) -> Result<Self> {
        Self::new(latlong_points(s_theta, s_phi)?, l_max, Provenance::Latlong)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Orientation] {
        &self.points
    }

    /// `S × (l_max+1)²`, row `s` is `eval_real_sh(l_max, p_s)`.
    pub fn y_matrix(&self) -> &DenseTensor {
        &self.y
    }

    /// `λ(l,m)` indexed by `l² + l + m`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Points as an `S × 3` matrix.
    pub fn point_matrix(&self) -> DenseTensor {
        let data = self.points.iter().flat_map(|p| p.xyz()).collect();
        DenseTensor::new(vec![self.len(), 3], data).expect("shape")
    }

    pub fn to_file(&self) -> GridFile {
        let mut weights = BTreeMap::new();
        for l in 0..=self.l_max {
            for m in -(l as i64)..=(l as i64) {
                weights.insert(format!("{l},{m}"), self.weights[lm_index(l, m)]);
            }
        }
        GridFile {
            provenance: self.provenance.to_string(),
            l: self.l_max,
            points: self.points.iter().map(Orientation::xyz).collect(),
            weights,
        }
    }

    /// Rebuilds from points; stored weights are checked against the recomputed ones.
    pub fn from_file(file: &GridFile) -> Result<Self> {
        let points = file
            .points
            .iter()
            .map(|&p| Orientation::new(p))
            .collect::<Result<Vec<_>>>()?;
        let grid = Self::new(points, file.l, file.provenance.parse()?)?;
        for l in 0..=grid.l_max {
            for m in -(l as i64)..=(l as i64) {
                let key = format!("{l},{m}");
                let stored = file
                    .weights
                    .get(&key)
                    .ok_or_else(|| EstError::invalid(format!("grid file lacks weight {key}")))?;
                let ours = grid.weights[lm_index(l, m)];
                if (stored - ours).abs() > 1e-12 * ours.abs().max(1.0) {
                    return Err(EstError::invalid(format!(
                        "weight {key} is {stored}, points give {ours}"
                    )));
                }
            }
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// `λ(l,m) = 1 / Σ_s Y(l,m)(p_s)²` for each column of `y`.
pub fn conjugate_weights(y: &DenseTensor) -> Result<Vec<f64>> {
    let n = y.cols();
    let mut sums = vec![0.0; n];
    for row in y.data().chunks_exact(n) {
        for (acc, v) in sums.iter_mut().zip(row) {
            *acc += v * v;
        }
    }
    sums.iter()
        .enumerate()
        .map(|(k, &s)| {
            if s > 0.0 && s.is_finite() {
                Ok(1.0 / s)
            } else {
                Err(EstError::invalid(format!("harmonic {k} vanishes on every grid point")))
            }
        })
        .collect()
}

/// On-disk grid layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub provenance: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Fl,
    Latlong,
}

impl FromStr for GridKind {
    type Err = EstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fl" => Ok(GridKind::Fl),
            "latlong" => Ok(GridKind::Latlong),
            other => Err(EstError::invalid(format!("unknown grid kind {other:?}"))),
        }
    }
}

/// A recipe for a grid, independent of degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub points: usize,
    pub optimize: bool,
}

impl GridSpec {
    pub fn fl(points: usize) -> Self {
        Self {
            kind: GridKind::Fl,
            points,
            optimize: false,
        }
    }

    pub fn fl_optimized(points: usize) -> Self {
        Self {
            kind: GridKind::Fl,
            points,
            optimize: true,
        }
    }

    pub fn latlong(points: usize) -> Self {
        Self {
            kind: GridKind::Latlong,
            points,
            optimize: false,
        }
    }

    pub fn label(&self) -> String {
        match (self.kind, self.optimize) {
            (GridKind::Fl, false) => format!("fl-{}", self.points),
            (GridKind::Fl, true) => format!("fl-optimized-{}", self.points),
            (GridKind::Latlong, _) => format!("latlong-{}", self.points),
        }
    }

    pub fn build(&self, l_max: usize) -> Result<SphereGrid> {
        match self.kind {
            GridKind::Fl => {
                let grid = SphereGrid::fibonacci(self.points, l_max)?;
                if self.optimize {
                    repulsion_optimize(&grid, &RepulsionConfig::for_points(self.points))
                } else {
                    Ok(grid)
                }
            }
            GridKind::Latlong => {
                if self.optimize {
                    return Err(EstError::invalid("repulsion applies only to Fibonacci grids"));
                }
                let (t, p) = latlong_shape(self.points)?;
                SphereGrid::latlong(t, p, l_max)
            }
        }
    }

    /// Like [`GridSpec::build`], reusing `<cache_dir>/grid-<label>-L<l>.json` when present.
    pub fn build_cached(&self, l_max: usize, cache_dir: Option<&Path>) -> Result<SphereGrid> {
        let Some(dir) = cache_dir.filter(|_| self.optimize) else {
            return self.build(l_max);
        };
        let path = dir.join(format!("grid-{}-L{l_max}.json", self.label()));
        if let Ok(grid) = SphereGrid::load(&path) {
            return Ok(grid);
        }
        let grid = self.build(l_max)?;
        std::fs::create_dir_all(dir)?;
        grid.save(&path)?;
        Ok(grid)
    }
}
