//! Named parameter storage and per-tape bindings.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{NumericsError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Ordered map of named parameter tensors.
#[derive(Clone, Default, Debug, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|a| a.as_ref())
    }

    pub fn get_arc(&self, name: &str) -> Option<Arc<Tensor>> {
        self.entries.get(name).cloned()
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    /// Moves every entry of `other` into `self`, replacing duplicates.
    pub fn extend(&mut self, other: ParamStore) {
        self.entries.extend(other.entries);
    }

    /// Subset of entries whose name starts with `prefix`.
    pub fn filtered(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// SHA-256 over names, shapes and little-endian values of entries under `prefix`.
    pub fn checksum(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.entries.iter().filter(|(k, _)| k.starts_with(prefix)) {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Weight matrix `[fan_in, fan_out]` from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init_uniform(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data).unwrap());
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn init_full(&mut self, name: &str, shape: &[usize], value: f64) {
        self.insert(name, Tensor::full(shape, value));
    }

    /// Overwrites an existing entry, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let existing = self
            .entries
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))?;
        if existing.shape() != value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set",
                left: existing.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.insert(name, value);
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parameters of a [`ParamStore`] bound to one tape.
///
/// Entries are registered lazily on first use. Names under a frozen prefix
/// become constants and never receive gradients.
pub struct Bindings<'t, 's> {
    tape: &'t Tape,
    store: &'s ParamStore,
    frozen: Vec<String>,
    vars: RefCell<BTreeMap<String, Var<'t>>>,
}

impl<'t, 's> Bindings<'t, 's> {
    pub fn new(tape: &'t Tape, store: &'s ParamStore) -> Self {
        Self {
            tape,
            store,
            frozen: Vec::new(),
            vars: RefCell::new(BTreeMap::new()),
        }
    }

    /// Treat every parameter starting with `prefix` as a constant.
    pub fn freeze(mut self, prefix: impl Into<String>) -> Self {
        self.frozen.push(prefix.into());
        self
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Tape variable for parameter `name`. Panics if the store lacks it.
    pub fn param(&self, name: &str) -> Var<'t> {
        if let Some(v) = self.vars.borrow().get(name) {
            return *v;
        }
        let value = self
            .store
            .get_arc(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from store"));
        let v = self.tape.shared(value, !self.is_frozen(name));
        self.vars.borrow_mut().insert(name.to_string(), v);
        v
    }

    /// Names touched by the forward pass so far.
    pub fn bound_names(&self) -> Vec<String> {
        self.vars.borrow().keys().cloned().collect()
    }

    /// Gradients of every bound trainable parameter.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .borrow()
            .iter()
            .filter_map(|(k, v)| grads.get(*v).map(|g| (k.clone(), g.clone())))
            .collect()
    }
}
