use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::mobility::io::{decode_flat, encode_flat};
use crate::rng::{derive_seed, hash_str, Rng};
use crate::{Error, Result};
use rand::SeedableRng;

/// Named parameter tensors iterated in name order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    seed: u64,
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    provenance: Vec<String>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

impl ModelParams {
    pub fn new(seed: u64) -> Self {
        ModelParams {
            seed,
            tensors: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn insert(&mut self, name: &str, t: Tensor) {
        let prev = self.tensors.insert(name.to_string(), t);
        assert!(prev.is_none(), "duplicate parameter '{name}'");
    }

    /// Uniform in ±√(6/(fan_in+fan_out)), seeded by the parameter name.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = Rng::seed_from_u64(derive_seed(self.seed, &[hash_str(name)]));
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape, data));
    }

    pub fn add_filled(&mut self, name: &str, shape: &[usize], value: f64) {
        self.insert(name, Tensor::filled(shape, value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn set(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn value_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = f(*v));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    /// Writes the values as a flat binary payload at `path` plus a JSON
    /// manifest of names and shapes at `<path>.json`.
    pub fn save(&self, path: &Path, provenance: &[String]) -> Result<()> {
        let mut flat = Vec::with_capacity(self.value_count());
        let mut entries = Vec::with_capacity(self.len());
        for (name, t) in &self.tensors {
            flat.extend_from_slice(t.data());
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            });
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, encode_flat(&flat))?;
        let manifest = Manifest {
            seed: self.seed,
            provenance: provenance.to_vec(),
            tensors: entries,
        };
        std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let flat = decode_flat(&std::fs::read(path)?, path)?;
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path(path))?)?;
        let mut params = ModelParams::new(manifest.seed);
        let mut offset = 0;
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            if offset + n > flat.len() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("payload too short for tensor '{}'", e.name),
                });
            }
            params.insert(&e.name, Tensor::new(&e.shape, flat[offset..offset + n].to_vec()));
            offset += n;
        }
        if offset != flat.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("{} trailing values", flat.len() - offset),
            });
        }
        Ok(params)
    }
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
