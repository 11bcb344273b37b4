//! Adam, used only by the rotational-symmetry probe.

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::DenseTensor;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: HashMap<ParamId, Vec<f64>>,
    v: HashMap<ParamId, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Apply one update. Iterates parameters in id order so updates are reproducible.
    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<ParamId, DenseTensor>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut ids: Vec<_> = grads.keys().copied().collect();
        ids.sort();
        for id in ids {
            let g = grads[&id].data();
            let m = self.m.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let p = store.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
