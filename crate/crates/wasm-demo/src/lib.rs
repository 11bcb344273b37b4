//! Browser bindings for three interactive views: a sampling grid with its
//! uniformity statistics, a spherical signal built from harmonic coefficients,
//! and the rotation error of a randomly initialised EST layer.

use std::sync::Arc;

use est_core::est::{est_layer, EstConfig, EstLayer};
use est_core::ft::{forward_ft, roundtrip_report, SphericalTransform};
use est_core::harmonics::{num_coeffs, random_rotation, rotate_steerable, wigner_d, SteerableTensor};
use est_core::params::ParamStore;
use est_core::rng::{derive_seed, seeded_rng};
use est_core::sphere::{uniformity_report, GridSpec, SphereGrid, UniformityReport};
use est_core::DenseTensor;
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 2048;

#[derive(Debug, Serialize)]
pub struct GridView {
    pub label: String,
    /// Flattened `[x, y, z]` triples.
    pub points: Vec<f64>,
    pub uniformity: UniformityReport,
}

#[derive(Debug, Serialize)]
pub struct SignalView {
    /// One value per grid point, in grid order.
    pub values: Vec<f64>,
    pub roundtrip_error: f64,
}

#[derive(Debug, Serialize)]
pub struct RotationView {
    pub label: String,
    pub relative_error: Vec<f64>,
    pub mean: f64,
}

fn spec(kind: &str, points: usize, optimize: bool) -> Result<GridSpec, String> {
    if points > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} points"));
    }
    let kind = kind.parse().map_err(|e: est_core::EstError| e.to_string())?;
    Ok(GridSpec { kind, points, optimize })
}

fn grid(kind: &str, points: usize, optimize: bool, l_max: usize) -> Result<(GridSpec, Arc<SphereGrid>), String> {
    let spec = spec(kind, points, optimize)?;
    let grid = spec.build(l_max).map_err(|e| e.to_string())?;
    Ok((spec, Arc::new(grid)))
}

pub fn grid_view(kind: &str, points: usize, optimize: bool) -> Result<GridView, String> {
    let (spec, g) = grid(kind, points, optimize, 2)?;
    Ok(GridView {
        label: spec.label(),
        points: g.points().iter().flat_map(|p| p.xyz()).collect(),
        uniformity: uniformity_report(&g, 16, &mut seeded_rng(0)),
    })
}

/// `coeffs` holds `(l+1)²` harmonic coefficients in `l² + l + m` order.
pub fn signal_view(kind: &str, points: usize, coeffs: &[f64]) -> Result<SignalView, String> {
    let l = (coeffs.len() as f64).sqrt() as usize;
    if l == 0 || l * l != coeffs.len() {
        return Err(format!("{} coefficients do not fill whole degrees", coeffs.len()));
    }
    let l_max = l - 1;
    let (_, g) = grid(kind, points, false, l_max)?;
    let x = SteerableTensor::new(l_max, DenseTensor::col_vector(coeffs.to_vec())).map_err(|e| e.to_string())?;
    let f = forward_ft(&x, &g).map_err(|e| e.to_string())?;
    let rt = roundtrip_report(l_max, &g, 8, &mut seeded_rng(1)).map_err(|e| e.to_string())?;
    Ok(SignalView {
        values: f.values().data().to_vec(),
        roundtrip_error: rt.mean_relative_error,
    })
}

/// Relative change `‖layer(Dx) − D·layer(x)‖ / ‖D·layer(x)‖` over `rotations` random rotations.
pub fn rotation_view(kind: &str, points: usize, optimize: bool, rotations: usize, seed: u64) -> Result<RotationView, String> {
    let (l, c) = (2, 8);
    let (spec, g) = grid(kind, points, optimize, l)?;
    let ft = SphericalTransform::new(g, l).map_err(|e| e.to_string())?;
    let mut store = ParamStore::new();
    let layer = EstLayer::new(&mut store, "est", EstConfig::new(l, c), &mut seeded_rng(derive_seed(seed, 0))).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(derive_seed(seed, 1));
    let n = num_coeffs(l);
    let data = (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = SteerableTensor::new(l, DenseTensor::new(vec![n, c], data).expect("shape")).expect("finite");
    let y = est_layer(&store, &layer, &x, None, &ft).map_err(|e| e.to_string())?;
    let mut errs = Vec::with_capacity(rotations);
    for _ in 0..rotations {
        let d = wigner_d(l, &random_rotation(&mut rng)).map_err(|e| e.to_string())?;
        let a = est_layer(&store, &layer, &rotate_steerable(&x, &d).expect("degree"), None, &ft).map_err(|e| e.to_string())?;
        let b = rotate_steerable(&y, &d).expect("degree");
        errs.push(a.coeffs.sub(&b.coeffs).expect("shape").frobenius() / b.coeffs.frobenius());
    }
    let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
    Ok(RotationView {
        label: spec.label(),
        relative_error: errs,
        mean,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("view serialises")).map_err(|e| JsError::new(&e))
}

/// JSON `GridView` for a grid of the given family.
#[wasm_bindgen(js_name = sampleGrid)]
pub fn sample_grid(kind: &str, points: usize, optimize: bool) -> Result<String, JsError> {
    to_js(grid_view(kind, points, optimize))
}

/// JSON `SignalView` for harmonic coefficients evaluated on a Fibonacci or lat-long grid.
#[wasm_bindgen(js_name = sphericalSignal)]
pub fn spherical_signal(kind: &str, points: usize, coeffs: Vec<f64>) -> Result<String, JsError> {
    to_js(signal_view(kind, points, &coeffs))
}

/// JSON `RotationView` for one EST layer sampled on the given grid.
#[wasm_bindgen(js_name = rotationError)]
pub fn rotation_error(kind: &str, points: usize, optimize: bool, rotations: usize, seed: u32) -> Result<String, JsError> {
    to_js(rotation_view(kind, points, optimize, rotations, seed as u64))
}
