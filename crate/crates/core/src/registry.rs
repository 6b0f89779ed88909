//! Name-keyed constructors for swappable strategies.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

pub type Constructor<T, C> = fn(&C) -> Result<Box<T>>;

/// Maps strategy names to constructors taking a config `C`.
pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Constructor<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: Constructor<T, C>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn build(&self, name: &str, cfg: &C) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(ctor) => ctor(cfg),
            None => Err(CoreError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().into_iter().map(String::from).collect(),
            }),
        }
    }
}
