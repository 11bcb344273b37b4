//! The equivariant spherical transformer layer: attention over sampled
//! orientations and a mixture of steerable and spherical experts.

mod attention;
mod experts;
mod layer;

pub use attention::{spherical_attention, SphericalAttention};
pub use experts::{moe_ffn, ExpertGate, MoeFfn, Routing, SphericalExpert, SteerableExpert};
pub use layer::{est_layer, EstConfig, EstLayer};
