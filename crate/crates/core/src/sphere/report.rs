use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::SphereGrid;
use super::lattice::geodesic;
use crate::harmonics::{random_rotation, rotate_vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub points: usize,
    pub nn_min: f64,
    pub nn_max: f64,
    pub nn_mean: f64,
    pub nn_ratio: f64,
    pub gram_residual: f64,
    /// Mean geodesic distance from a rotated point to its nearest grid point.
    pub closure_distance: f64,
    /// `closure_distance / nn_mean`.
    pub closure_deviation: f64,
    pub rotations: usize,
}

/// `max |√λ_a √λ_b Σ_s Y_a(p_s) Y_b(p_s) − δ_ab|` over harmonics up to the grid degree.
pub fn gram_residual(grid: &SphereGrid) -> f64 {
    let y = grid.y_matrix();
    let w = grid.weights();
    let g = y.matmul_tn(y).expect("square gram");
    let n = w.len();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let v = (w[a] * w[b]).sqrt() * g.get(a, b) - if a == b { 1.0 } else { 0.0 };
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Geodesic distance from each point to its nearest distinct neighbour.
pub fn nearest_neighbour_distances(grid: &SphereGrid) -> Vec<f64> {
    let pts: Vec<[f64; 3]> = grid.points().iter().map(|p| p.xyz()).collect();
    (0..pts.len())
        .map(|i| {
            (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| geodesic(pts[i], pts[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn uniformity_report<R: Rng>(grid: &SphereGrid, rotations: usize, rng: &mut R) -> UniformityReport {
    let nn = nearest_neighbour_distances(grid);
    let nn_min = nn.iter().copied().fold(f64::INFINITY, f64::min);
    let nn_max = nn.iter().copied().fold(0.0, f64::max);
    let nn_mean = nn.iter().sum::<f64>() / nn.len() as f64;
    let pts: Vec<[f64; 3]> = grid.points().iter().map(|p| p.xyz()).collect();
    let mut total = 0.0;
    for _ in 0..rotations {
        let r = random_rotation(rng);
        for p in &pts {
            let q = rotate_vector(&r, *p);
            total += pts.iter().map(|&s| geodesic(q, s)).fold(f64::INFINITY, f64::min);
        }
    }
    let closure_distance = if rotations == 0 {
        0.0
    } else {
        total / (rotations * pts.len()) as f64
    };
    UniformityReport {
        points: grid.len(),
        nn_min,
        nn_max,
        nn_mean,
        nn_ratio: nn_max / nn_min,
        gram_residual: gram_residual(grid),
        closure_distance,
        closure_deviation: if nn_mean > 0.0 { closure_distance / nn_mean } else { 0.0 },
        rotations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::Orientation;
    use crate::rng::seeded_rng;
    use crate::sphere::Provenance;

    #[test]
    fn octahedron_is_a_degree_one_design() {
        let pts = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
        .iter()
        .map(|&p| Orientation::new(p).unwrap())
        .collect();
        let g = SphereGrid::new(pts, 1, Provenance::Fl).unwrap();
        assert!(gram_residual(&g) < 1e-15);
    }

    #[test]
    fn fibonacci_spacing_ratio_is_bounded() {
        let g = SphereGrid::fibonacci(64, 2).unwrap();
        let r = uniformity_report(&g, 0, &mut seeded_rng(0));
        assert!(r.nn_ratio < 2.0, "{}", r.nn_ratio);
    }

    #[test]
    fn latlong_pole_spacing_is_much_tighter() {
        let g = SphereGrid::latlong(14, 15, 2).unwrap();
        let r = uniformity_report(&g, 0, &mut seeded_rng(0));
        assert!(r.nn_ratio > 3.0, "{}", r.nn_ratio);
    }

    #[test]
    fn fibonacci_beats_latlong_on_gram_residual() {
        let fl = SphereGrid::fibonacci(256, 2).unwrap();
        let ll = SphereGrid::latlong(14, 15, 2).unwrap();
        assert!(gram_residual(&fl) < gram_residual(&ll));
    }

    #[test]
    fn closure_distance_shrinks_with_density() {
        let mut rng = seeded_rng(1);
        let d: Vec<f64> = [64, 256, 1024]
            .iter()
            .map(|&s| uniformity_report(&SphereGrid::fibonacci(s, 1).unwrap(), 4, &mut rng).closure_distance)
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }
}
