use std::sync::Arc;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to one entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) struct Entry<T> {
    pub(crate) name: String,
    pub(crate) value: Arc<Tensor<T>>,
    pub(crate) grad: Tensor<T>,
    pub(crate) first_moment: Tensor<T>,
    pub(crate) second_moment: Tensor<T>,
    pub(crate) steps: u64,
}

impl<T: Scalar> Entry<T> {
    fn fresh(name: String, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name,
            value: Arc::new(value),
            grad: Tensor::zeros(&shape),
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            steps: 0,
        }
    }
}

/// Named trainable tensors with their gradients and optimizer state, kept in
/// insertion order.
///
/// Values are reference counted so a [`Graph`](super::Graph) can hold them
/// without copying; updates go through copy-on-write.
#[derive(Clone, Debug)]
pub struct ParamStore<T = f32> {
    entries: Vec<Entry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        self.entries.push(Entry::fresh(name, value));
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Swaps in a new value for an existing entry, keeping its position and
    /// resetting its gradient and optimizer state.
    pub fn replace(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        let id = self.require(name)?;
        self.entries[id.0] = Entry::fresh(name.to_string(), value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::State(format!("unknown parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn steps(&self, id: ParamId) -> u64 {
        self.entries[id.0].steps
    }

    pub(crate) fn shared_value(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = &mut Entry<T>> {
        self.entries.iter_mut()
    }

    /// Mutable access to a value; clones the tensor if a graph still holds it.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &*e.value))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn scale_grads(&mut self, factor: T) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = *g * factor);
        }
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Copy at another precision. Gradients and optimizer state are reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry::fresh(e.name.clone(), e.value.cast()))
                .collect(),
        }
    }

    /// `(name, checksum)` for every entry, in store order.
    pub fn checksums(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.checksum()))
            .collect()
    }
}
