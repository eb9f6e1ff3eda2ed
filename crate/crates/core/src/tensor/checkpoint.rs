//! Versioned JSON checkpoints: `(name, shape, values)` triples plus the
//! seed and step that produced them and a free-form string header.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::value::Tensor;
use crate::error::{Error, Result};

pub const FORMAT: &str = "avforge-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub step: u64,
    pub header: BTreeMap<String, String>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, seed: u64, step: u64) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            seed,
            step,
            header: BTreeMap::new(),
            params: store
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn with_header(mut self, key: &str, value: impl ToString) -> Self {
        self.header.insert(key.to_string(), value.to_string());
        self
    }

    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing header field `{key}`")))
    }

    /// Copies values into a store with the same parameter names and shapes.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for (p, saved) in store.iter_mut().zip(&self.params) {
            if p.name != saved.name || p.value.shape() != saved.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match saved `{}` {:?}",
                    p.name,
                    p.value.shape(),
                    saved.name,
                    saved.shape
                )));
            }
            p.value = Tensor::new(saved.shape.clone(), saved.values.clone());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        for t in &ck.params {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::Checkpoint(format!("tensor `{}` has inconsistent shape", t.name)));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn round_trip_is_exact() {
        let mut store = ParamStore::new();
        store.add_normal("a", &[3, 4], 1.3, &mut rng_from(1));
        store.add_uniform("b", &[1, 5], 0.1, &mut rng_from(2));
        let ck = Checkpoint::from_store(&store, 42, 17).with_header("arch", "gru");
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(&[3, 4]));
        other.add("b", Tensor::zeros(&[1, 5]));
        back.load_into(&mut other).unwrap();
        assert_eq!(other.fingerprint(), store.fingerprint());
    }

    #[test]
    fn rejects_foreign_and_mismatched() {
        assert!(Checkpoint::from_json(r#"{"format":"x","version":1,"seed":0,"step":0,"header":{},"params":[]}"#).is_err());
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[2, 2]));
        let ck = Checkpoint::from_store(&store, 0, 0);
        let mut wrong = ParamStore::new();
        wrong.add("a", Tensor::zeros(&[2, 3]));
        assert!(ck.load_into(&mut wrong).is_err());
    }
}
