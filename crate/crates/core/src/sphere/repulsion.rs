use serde::{Deserialize, Serialize};

use super::grid::{Provenance, SphereGrid};
use super::report::gram_residual;
use crate::error::{EstError, Result};
use crate::harmonics::Orientation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepulsionConfig {
    pub iters: usize,
    pub step: f64,
}

impl RepulsionConfig {
    /// 200 iterations at step `0.01 / S`.
    pub fn for_points(s: usize) -> Self {
        Self {
            iters: 200,
            step: 0.01 / s as f64,
        }
    }
}

/// Pairwise inverse-square repulsion with explicit Euler steps and reprojection.
///
/// A step that raises the Gram residual is rejected and the step size halved,
/// so the residual of the result never exceeds that of the input.
pub fn repulsion_optimize(grid: &SphereGrid, cfg: &RepulsionConfig) -> Result<SphereGrid> {
    let mut pts: Vec<[f64; 3]> = grid.points().iter().map(Orientation::xyz).collect();
    check_distinct(&pts)?;
    let l_max = grid.l_max();
    let mut current = grid.clone();
    let mut metric = gram_residual(&current);
    let mut step = cfg.step;
    for _ in 0..cfg.iters {
        let forces = repulsive_forces(&pts);
        let mut disp = 0.0f64;
        let moved: Vec<[f64; 3]> = pts
            .iter()
            .zip(&forces)
            .map(|(p, f)| {
                let q = [p[0] + step * f[0], p[1] + step * f[1], p[2] + step * f[2]];
                let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                let q = [q[0] / n, q[1] / n, q[2] / n];
                disp = disp.max(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt());
                q
            })
            .collect();
        if disp < 1e-8 {
            break;
        }
        let candidate = SphereGrid::new(
            moved.iter().map(|&q| Orientation::new(q)).collect::<Result<_>>()?,
            l_max,
            Provenance::FlOptimized,
        );
        match candidate {
            Ok(c) if gram_residual(&c) <= metric => {
                metric = gram_residual(&c);
                current = c;
                pts = moved;
            }
            _ => step *= 0.5,
        }
    }
    SphereGrid::new(current.points().to_vec(), l_max, Provenance::FlOptimized)
}

fn check_distinct(pts: &[[f64; 3]]) -> Result<()> {
    for i in 0..pts.len() {
        for j in 0..i {
            let d2: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum();
            if d2 < 1e-24 {
                return Err(EstError::invalid(format!("points {j} and {i} coincide")));
            }
        }
    }
    Ok(())
}

fn repulsive_forces(pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut f = vec![[0.0; 3]; pts.len()];
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let d = [pts[i][0] - pts[j][0], pts[i][1] - pts[j][1], pts[i][2] - pts[j][2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let inv = 1.0 / (r * r * r);
            for k in 0..3 {
                f[i][k] += d[k] * inv;
            }
        }
    }
    f
}
