//! Sphere grids: Fibonacci lattices, repulsion refinement, lat-long baselines
//! and uniformity diagnostics.

mod grid;
mod lattice;
mod repulsion;
mod report;

pub use grid::{conjugate_weights, GridFile, GridKind, GridSpec, Provenance, SphereGrid};
pub use lattice::{fibonacci_lattice, fibonacci_points, latlong_points, latlong_shape, GOLDEN_RATIO};
pub use repulsion::{repulsion_optimize, RepulsionConfig};
pub use report::{gram_residual, nearest_neighbour_distances, uniformity_report, UniformityReport};
