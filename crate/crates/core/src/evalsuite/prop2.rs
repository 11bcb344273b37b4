use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::est::SphericalAttention;
use crate::ft::{nyquist_check, SphericalTransform};
use crate::harmonics::{num_coeffs, SteerableTensor};
use crate::params::ParamStore;
use crate::so3::{product_weight, TensorProduct};
use crate::sphere::SphereGrid;
use crate::tape::Tape;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    pub l_max: usize,
    pub points: usize,
    pub trials: usize,
    /// Largest `‖IFT(FT u · FT v) − H(u, v)‖ / ‖H(u, v)‖` over the trials.
    pub max_relative_deviation: f64,
    pub mean_relative_deviation: f64,
}

fn random_tensor<R: Rng>(l: usize, c: usize, rng: &mut R) -> SteerableTensor {
    let n = num_coeffs(l);
    let data = (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SteerableTensor::new(l, DenseTensor::new(vec![n, c], data).expect("shape")).expect("finite")
}

/// The product-of-harmonics coupling, truncated at `2L`.
pub fn h_weighted_product(l_max: usize) -> TensorProduct {
    TensorProduct::with_path_weights(l_max, l_max, 2 * l_max, product_weight)
}

fn check_grid(l_max: usize, grid: &SphereGrid) -> Result<()> {
    let (ok, msg) = nyquist_check(2 * l_max, grid.len());
    if !ok {
        return Err(EstError::invalid(msg));
    }
    if grid.l_max() < 2 * l_max {
        return Err(EstError::DegreeBound {
            requested: 2 * l_max,
            available: grid.l_max(),
        });
    }
    Ok(())
}

/// Compares the pointwise product of two band-limited signals, transformed back
/// to degree `2L`, with the coupling-weighted product of their coefficients.
pub fn proposition2_check<R: Rng>(l_max: usize, grid: &Arc<SphereGrid>, trials: usize, rng: &mut R) -> Result<Prop2Report> {
    check_grid(l_max, grid)?;
    let small = SphericalTransform::new(Arc::clone(grid), l_max)?;
    let wide = SphericalTransform::new(Arc::clone(grid), 2 * l_max)?;
    let tp = h_weighted_product(l_max);
    let mut devs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let u = random_tensor(l_max, 1, rng);
        let v = random_tensor(l_max, 1, rng);
        let fu = small.forward_matrix().matmul(&u.coeffs)?;
        let fv = small.forward_matrix().matmul(&v.coeffs)?;
        let back = wide.inverse_matrix().matmul(&fu.mul(&fv)?)?;
        let want = tp.apply(&u, &v)?;
        devs.push(back.sub(&want.coeffs)?.frobenius() / want.coeffs.frobenius());
    }
    Ok(Prop2Report {
        l_max,
        points: grid.len(),
        trials,
        max_relative_deviation: devs.iter().copied().fold(0.0, f64::max),
        mean_relative_deviation: devs.iter().sum::<f64>() / trials.max(1) as f64,
    })
}

/// With attention restricted to each orientation itself, the query-key logit
/// at every grid point is the pointwise product of the projected signals. This
/// compares it against the coupling-weighted product of the projected
/// coefficients, evaluated at the same points, and returns the largest
/// absolute deviation.
pub fn reduction_check<R: Rng>(l_max: usize, grid: &Arc<SphereGrid>, channels: usize, trials: usize, rng: &mut R) -> Result<f64> {
    check_grid(l_max, grid)?;
    let small = SphericalTransform::new(Arc::clone(grid), l_max)?;
    let wide = SphericalTransform::new(Arc::clone(grid), 2 * l_max)?;
    let tp = h_weighted_product(l_max);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut store = ParamStore::new();
        let mut attn = SphericalAttention::new(&mut store, "attn", channels, 1, false, rng)?;
        attn.local_only = true;
        let u = random_tensor(l_max, channels, rng);
        let v = random_tensor(l_max, channels, rng);
        let tape = Tape::inference(&store);
        let p = grid.point_matrix();
        let fu = small.forward(&tape, &tape.constant(u.coeffs.clone()))?;
        let fv = small.forward(&tape, &tape.constant(v.coeffs.clone()))?;
        let logits = attn.logits(&tape, &fu, &fv, &p, &p)?.remove(0);
        // the linear map: undo 1/√C and sum the channel-wise products
        let uq = SteerableTensor::new(l_max, u.coeffs.matmul(store.get(attn.q.w))?)?;
        let vk = SteerableTensor::new(l_max, v.coeffs.matmul(store.get(attn.k.w))?)?;
        let prod = tp.apply(&uq, &vk)?.coeffs.sum_axis(Some(1))?;
        let want = wide.forward_matrix().matmul(&prod)?;
        let scale = (channels as f64).sqrt();
        for s in 0..grid.len() {
            worst = worst.max((logits.value().get(s, s) * scale - want.get(s, 0)).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn fl(s: usize, l: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::fibonacci(s, l).unwrap())
    }

    #[test]
    fn constants_multiply_exactly() {
        let r = proposition2_check(0, &fl(16, 0), 10, &mut seeded_rng(1)).unwrap();
        assert!(r.max_relative_deviation < 1e-12, "{}", r.max_relative_deviation);
    }

    #[test]
    fn degree_one_on_a_dense_grid() {
        let r = proposition2_check(1, &fl(256, 2), 50, &mut seeded_rng(2)).unwrap();
        assert!(r.mean_relative_deviation < 1e-3, "{}", r.mean_relative_deviation);
        assert!(r.max_relative_deviation < 2e-3, "{}", r.max_relative_deviation);
        let g = Arc::new(crate::sphere::GridSpec::fl(1024).build(2).unwrap());
        let r = proposition2_check(1, &g, 50, &mut seeded_rng(2)).unwrap();
        assert!(r.max_relative_deviation < 1e-3, "{}", r.max_relative_deviation);
    }

    #[test]
    fn refinement_helps() {
        let a = proposition2_check(1, &fl(256, 2), 30, &mut seeded_rng(3)).unwrap();
        let b = proposition2_check(1, &fl(1024, 2), 30, &mut seeded_rng(3)).unwrap();
        assert!(b.max_relative_deviation <= a.max_relative_deviation);
    }

    #[test]
    fn undersampled_grids_are_rejected() {
        assert!(proposition2_check(2, &fl(15, 4), 1, &mut seeded_rng(0)).is_err());
        assert!(proposition2_check(1, &fl(64, 1), 1, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn masked_attention_reduces_to_the_weighted_product() {
        let dev = reduction_check(1, &fl(64, 2), 4, 5, &mut seeded_rng(4)).unwrap();
        assert!(dev < 1e-6, "{dev}");
    }
}
