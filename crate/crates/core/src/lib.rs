//! Rotation-equivariant networks on steerable SO(3) features: spherical
//! Fourier transforms on near-uniform grids, spherical attention with hybrid
//! experts, and the audits that measure them.

pub mod error;
pub mod est;
pub mod evalsuite;
pub mod ft;
pub mod harmonics;
pub mod mpnn;
pub mod nn;
pub mod optim;
pub mod params;
pub mod rng;
pub mod so3;
pub mod sphere;
pub mod tape;
pub mod tensor;

pub use error::{EstError, Result};
pub use tensor::DenseTensor;
