//! Named parameter store, leased onto a tape per forward pass.

use super::tape::{NodeId, Tape};
use ndarray::Array2;
use std::collections::HashMap;

/// All trainable tensors of a model, keyed by stable names. Iteration order
/// is insertion order, which keeps checkpoints and optimizer sweeps
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: HashMap<String, Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        if !self.values.contains_key(&name) {
            self.names.push(name.clone());
        }
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Array2<f64>> {
        self.values.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.values
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(|n| (n.as_str(), &self.values[n]))
    }

    /// Total scalar count, for reporting.
    pub fn scalar_count(&self) -> usize {
        self.iter().map(|(_, v)| v.len()).sum()
    }

    /// Lease every parameter as a leaf on a fresh tape.
    pub fn lease(&self, tape: &mut Tape) -> LeasedParams {
        let mut map = HashMap::new();
        for name in &self.names {
            map.insert(name.clone(), tape.leaf(self.values[name].clone()));
        }
        LeasedParams { map }
    }
}

/// Tape leaves for one forward pass, keyed by parameter name.
pub struct LeasedParams {
    map: HashMap<String, NodeId>,
}

impl LeasedParams {
    pub fn node(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not leased"))
    }

    /// Collect gradients accumulated on the leased leaves.
    pub fn grads(&self, tape: &Tape) -> HashMap<String, Array2<f64>> {
        self.map
            .iter()
            .filter_map(|(name, &id)| tape.grad(id).map(|g| (name.clone(), g.clone())))
            .collect()
    }
}
