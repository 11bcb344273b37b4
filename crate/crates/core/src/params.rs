//! Parameter storage and the manifest + raw-binary checkpoint format.
//!
//! A checkpoint is a pair of files: `<stem>.json` holding
//! `{"format": "est-params-v1", "dtype": "f64-le", "params": [{"name", "shape", "offset", "len"}]}`
//! and `<stem>.bin` holding every tensor's data back to back as
//! little-endian IEEE-754 doubles. `offset` and `len` count elements, not bytes.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<DenseTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: DenseTensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    /// Gaussian init with variance `var`.
    pub fn normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        var: f64,
        rng: &mut R,
    ) -> ParamId {
        let sd = var.sqrt();
        let data = (0..rows * cols)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.insert(name, DenseTensor::new(vec![rows, cols], data).expect("shape"))
    }

    pub fn constant(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> ParamId {
        self.insert(name, DenseTensor::filled(rows, cols, v))
    }

    pub fn get(&self, id: ParamId) -> &DenseTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseTensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(DenseTensor::len).sum()
    }

    pub fn set_all(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = value);
        }
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len());
        let mut bytes = Vec::with_capacity(self.num_scalars() * 8);
        let mut offset = 0;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                len: t.len(),
            });
            offset += t.len();
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            dtype: "f64-le".to_string(),
            params: entries,
        };
        fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&manifest)?)?;
        fs::write(stem.with_extension("bin"), bytes)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
        if manifest.format != FORMAT || manifest.dtype != "f64-le" {
            return Err(EstError::invalid(format!(
                "unsupported checkpoint {} / {}",
                manifest.format, manifest.dtype
            )));
        }
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() % 8 != 0 {
            return Err(EstError::invalid("checkpoint payload is not a whole number of f64"));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut store = ParamStore::new();
        for e in manifest.params {
            let end = e.offset + e.len;
            if end > values.len() {
                return Err(EstError::invalid(format!("entry {} runs past payload", e.name)));
            }
            store.insert(e.name, DenseTensor::new(e.shape, values[e.offset..end].to_vec())?);
        }
        Ok(store)
    }
}

const FORMAT: &str = "est-params-v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    dtype: String,
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut rng = seeded_rng(3);
        let mut store = ParamStore::new();
        store.normal("a", 3, 4, 1.0, &mut rng);
        store.constant("b", 1, 2, -0.5);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        store.save(&stem).unwrap();
        let back = ParamStore::load(&stem).unwrap();
        assert_eq!(back.len(), 2);
        for id in store.ids() {
            assert_eq!(store.name(id), back.name(id));
            assert_eq!(store.get(id), back.get(id));
        }
        let raw = std::fs::read(stem.with_extension("bin")).unwrap();
        assert_eq!(raw.len(), 14 * 8);
    }
}
