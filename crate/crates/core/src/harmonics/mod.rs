//! Real spherical harmonics, rotations, Wigner-D matrices and steerable tensors.
//!
//! Conventions: orders within a degree run `m = -l..=l`, the `(l, m)` row of
//! a flattened coefficient vector is `l² + l + m`, and the real harmonics
//! carry no Condon-Shortley phase, so `Y(1,-1), Y(1,0), Y(1,1)` are
//! proportional to `y, z, x`.

mod rotation;
mod sh;
mod steerable;
mod wigner;

pub use rotation::{
    is_rotation, random_rotation, rotate_orientation, rotate_vector, rotation_about_z, Rotation,
};
pub use sh::{eval_real_sh, lm_index, num_coeffs, sh_matrix, Orientation};
pub use steerable::{rotate_steerable, SteerableTensor};
pub use wigner::{wigner_d, WignerD};
