use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};

/// A directed edge `i → j` with `r = pos_j − pos_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub r: [f64; 3],
    pub length: f64,
}

/// Atoms and the directed edges between every pair within the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudGraph {
    pub positions: Vec<[f64; 3]>,
    pub species: Vec<usize>,
    pub cutoff: f64,
    /// Sorted by `(i, j)`.
    pub edges: Vec<Edge>,
}

impl PointCloudGraph {
    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    /// Edges whose receiving node is `i`, i.e. `(i, j)` for `j ∈ N(i)`.
    pub fn neighbours(&self, i: usize) -> &[Edge] {
        let lo = self.edges.partition_point(|e| e.i < i);
        let hi = self.edges.partition_point(|e| e.i <= i);
        &self.edges[lo..hi]
    }
}

/// Edges `(i, j)` for every `0 < ‖pos_j − pos_i‖ ≤ cutoff`; both directions are present.
pub fn build_radius_graph(positions: &[[f64; 3]], species: &[usize], cutoff: f64) -> Result<PointCloudGraph> {
    if positions.is_empty() {
        return Err(EstError::invalid("a graph needs at least one atom"));
    }
    if positions.len() != species.len() {
        return Err(EstError::invalid(format!(
            "{} positions but {} species codes",
            positions.len(),
            species.len()
        )));
    }
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(EstError::invalid(format!("cutoff must be positive and finite, got {cutoff}")));
    }
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EstError::invalid("positions contain non-finite values"));
    }
    let mut edges = Vec::new();
    for (i, a) in positions.iter().enumerate() {
        for (j, b) in positions.iter().enumerate() {
            if i == j {
                continue;
            }
            let r = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let length = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            if length > 0.0 && length <= cutoff {
                edges.push(Edge { i, j, r, length });
            }
        }
    }
    Ok(PointCloudGraph {
        positions: positions.to_vec(),
        species: species.to_vec(),
        cutoff,
        edges,
    })
}
