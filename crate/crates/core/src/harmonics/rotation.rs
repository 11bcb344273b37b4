use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::sh::Orientation;

pub type Rotation = Matrix3<f64>;

/// Haar-distributed rotation from a normalised Gaussian quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
}

pub fn rotation_about_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn is_rotation(r: &Rotation, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() < tol && (r.determinant() - 1.0).abs() < tol
}

pub fn rotate_vector(r: &Rotation, p: [f64; 3]) -> [f64; 3] {
    let v = r * Vector3::new(p[0], p[1], p[2]);
    [v.x, v.y, v.z]
}

pub fn rotate_orientation(r: &Rotation, p: Orientation) -> Orientation {
    Orientation::from_direction(rotate_vector(r, p.xyz())).expect("rotation preserves norm")
}
