//! Clebsch-Gordan algebra and the equivariant layers built on it.

mod cg;
mod gate;
mod linear;
mod norm;
mod tp;

pub use cg::{cg_coefficients, complex_cg, product_weight, CgEntry, CgTable};
pub use gate::GateActivation;
pub use linear::DwLinear;
pub use norm::EquivariantLayerNorm;
pub use tp::{cg_tensor_product, TensorProduct};
