use std::f64::consts::PI;
use std::sync::Arc;

use est_core::ft::{forward_ft, inverse_ft, nyquist_check};
use est_core::harmonics::{eval_real_sh, num_coeffs, random_rotation, rotate_steerable, wigner_d, Orientation, SteerableTensor};
use est_core::params::ParamStore;
use est_core::rng::{derive_seed, seeded_rng};
use est_core::so3::cg_tensor_product;
use est_core::sphere::SphereGrid;
use est_core::tape::Tape;
use est_core::DenseTensor;
use proptest::prelude::*;
use rand::Rng;

fn orientation() -> impl Strategy<Value = Orientation> {
    (-1.0f64..1.0, 0.0..2.0 * PI).prop_map(|(z, phi)| Orientation::from_angles(z.acos(), phi))
}

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |d| DenseTensor::new(vec![rows, cols], d).unwrap())
}

fn random_tensor(l: usize, c: usize, seed: u64) -> SteerableTensor {
    let mut rng = seeded_rng(seed);
    let n = num_coeffs(l);
    let data = (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SteerableTensor::new(l, DenseTensor::new(vec![n, c], data).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn harmonics_obey_the_addition_theorem(p in orientation()) {
        let y = eval_real_sh(6, p);
        for l in 0..=6usize {
            let s: f64 = y[l * l..(l + 1) * (l + 1)].iter().map(|v| v * v).sum();
            prop_assert!((s - (2 * l + 1) as f64 / (4.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn wigner_d_is_a_norm_preserving_homomorphism(a in any::<u64>(), b in any::<u64>(), p in orientation()) {
        let r1 = random_rotation(&mut seeded_rng(a));
        let r2 = random_rotation(&mut seeded_rng(b));
        let y = eval_real_sh(4, p);
        let two_steps = wigner_d(4, &r1).unwrap().apply(&wigner_d(4, &r2).unwrap().apply(&y).unwrap()).unwrap();
        let one_step = wigner_d(4, &(r1 * r2)).unwrap().apply(&y).unwrap();
        for (u, v) in two_steps.iter().zip(&one_step) {
            prop_assert!((u - v).abs() < 1e-9);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((norm(&one_step) - norm(&y)).abs() < 1e-10);
    }

    #[test]
    fn fibonacci_grids_are_valid_and_reproducible(s in 16usize..400) {
        let g = SphereGrid::fibonacci(s, 2).unwrap();
        prop_assert_eq!(g.len(), s);
        for p in g.points() {
            let [x, y, z] = p.xyz();
            prop_assert!(((x * x + y * y + z * z).sqrt() - 1.0).abs() < 1e-12);
        }
        prop_assert!(g.weights().iter().all(|w| w.is_finite() && *w > 0.0));
        prop_assert_eq!(&g, &SphereGrid::fibonacci(s, 2).unwrap());
    }

    #[test]
    fn constants_roundtrip_on_any_grid(s in 4usize..300, v in -10.0f64..10.0) {
        let g = Arc::new(SphereGrid::fibonacci(s, 0).unwrap());
        let x = SteerableTensor::new(0, DenseTensor::row_vector(vec![v])).unwrap();
        let back = inverse_ft(&forward_ft(&x, &g).unwrap(), 0).unwrap();
        prop_assert!((back.coeffs.get(0, 0) - v).abs() < 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn nyquist_boundary_is_sharp(l in 0usize..12, s in 1usize..600) {
        prop_assert_eq!(nyquist_check(l, s).0, s >= 4 * l * l);
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(3, 7, -500.0, 500.0)) {
        let p = x.softmax(1).unwrap();
        for r in 0..3 {
            let row: Vec<f64> = (0..7).map(|c| p.get(r, c)).collect();
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_respects_transposition(a in matrix(4, 40, -1.0, 1.0), b in matrix(40, 3, -1.0, 1.0)) {
        let ab_t = a.matmul(&b).unwrap().transpose().unwrap();
        let bt_at = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
        prop_assert!(ab_t.max_abs_diff(&bt_at) < 1e-12);
    }

    #[test]
    fn coupling_product_is_equivariant_and_bilinear(seed in any::<u64>(), k in -3.0f64..3.0) {
        let u = random_tensor(2, 2, derive_seed(seed, 1));
        let v = random_tensor(2, 2, derive_seed(seed, 2));
        let d = wigner_d(2, &random_rotation(&mut seeded_rng(derive_seed(seed, 3)))).unwrap();
        let a = cg_tensor_product(&rotate_steerable(&u, &d).unwrap(), &rotate_steerable(&v, &d).unwrap(), 2).unwrap();
        let b = rotate_steerable(&cg_tensor_product(&u, &v, 2).unwrap(), &d).unwrap();
        prop_assert!(a.coeffs.max_abs_diff(&b.coeffs) < 1e-10);
        let scaled = SteerableTensor::new(2, u.coeffs.scale(k)).unwrap();
        let lhs = cg_tensor_product(&scaled, &v, 2).unwrap();
        let rhs = cg_tensor_product(&u, &v, 2).unwrap().coeffs.scale(k);
        prop_assert!(lhs.coeffs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_the_input(x in matrix(3, 4, -5.0, 5.0)) {
        let store = ParamStore::new();
        let tape = Tape::new(&store);
        let v = tape.leaf(x.clone());
        let loss = tape.sum(&tape.mul(&v, &v).unwrap(), None).unwrap();
        let grads = tape.backward(&loss).unwrap();
        prop_assert!(grads.wrt(&v).unwrap().max_abs_diff(&x.scale(2.0)) < 1e-12);
    }

    #[test]
    fn derived_seeds_separate_streams(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, a), derive_seed(seed, b));
    }
}
