//! Named parameter registry.
//!
//! Parameters live here as raw arrays; each forward pass binds them into
//! leaf tensors (trainable or frozen), and the optimizer writes updated
//! values back by name. Insertion order is the canonical order for
//! serialization, hashing and optimizer state.

use std::collections::HashMap;

use crate::error::{Result, TapError};
use crate::tensor::Tensor;
use crate::util::sha256_hex;

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            value.len(),
            "param {name}: shape/value mismatch"
        );
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, shape, value });
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn set_value(&mut self, name: &str, value: Vec<f64>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| TapError::config("param", format!("unknown parameter {name}")))?;
        if value.len() != self.entries[i].value.len() {
            return Err(TapError::config(
                "param",
                format!("size mismatch for {name}"),
            ));
        }
        self.entries[i].value = value;
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count (the registry walk).
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// SHA-256 over all values in insertion order; detects any drift.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.total_params() * 8);
        for e in &self.entries {
            bytes.extend_from_slice(e.name.as_bytes());
            for v in &e.value {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        sha256_hex(&bytes)
    }

    /// Creates leaf tensors for every parameter. Trainable bindings
    /// accumulate gradients; frozen ones are plain constants.
    pub fn bind(&self, trainable: bool) -> Binding {
        let mut map = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            let t = if trainable {
                Tensor::param(e.value.clone(), &e.shape).expect("stored params are finite")
            } else {
                Tensor::from_vec(e.value.clone(), &e.shape).expect("stored params are finite")
            };
            map.insert(e.name.clone(), t);
        }
        Binding { map }
    }
}

/// Leaf tensors for one forward/backward pass, keyed by parameter name.
pub struct Binding {
    map: HashMap<String, Tensor>,
}

impl Binding {
    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    /// Collects accumulated gradients by name (absent means exactly zero).
    pub fn grads(&self) -> HashMap<String, Vec<f64>> {
        let mut out = HashMap::new();
        for (name, tensor) in &self.map {
            if let Some(g) = tensor.grad() {
                out.insert(name.clone(), g);
            }
        }
        out
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_walk_counts() {
        let mut store = ParamStore::new();
        // A single linear layer 4 -> 4 with bias: 16 + 4 = 20 params.
        store.insert("fc.w", vec![4, 4], vec![0.0; 16]);
        store.insert("fc.b", vec![4], vec![0.0; 4]);
        assert_eq!(store.total_params(), 20);
    }

    #[test]
    fn hash_changes_with_values() {
        let mut store = ParamStore::new();
        store.insert("w", vec![2], vec![1.0, 2.0]);
        let h1 = store.content_hash();
        store.set_value("w", vec![1.0, 2.000001]).unwrap();
        assert_ne!(h1, store.content_hash());
    }

    #[test]
    fn binding_gradients_flow_only_when_trainable() {
        let mut store = ParamStore::new();
        store.insert("w", vec![3], vec![1.0, 2.0, 3.0]);

        let frozen = store.bind(false);
        let loss = frozen.get("w").mul(frozen.get("w")).unwrap().sum_all().unwrap();
        assert!(loss.backward().is_err());

        let live = store.bind(true);
        let loss = live.get("w").mul(live.get("w")).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(live.grads()["w"], vec![2.0, 4.0, 6.0]);
    }
}
