use alloc::string::String;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Index of a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Buffers such as batch-norm running statistics are stored alongside
    /// the weights but are not trained.
    pub trainable: bool,
}

/// Ordered storage of every weight and buffer of a model. Insertion order is
/// the checkpoint order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: Vec<Parameter<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        self.entries.push(Parameter { name: name.into(), value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &Parameter<T> {
        &self.entries[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Number of stored scalars, buffers included.
    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Whether every stored scalar is finite.
    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.data().iter().all(|v| v.is_finite()))
    }

    /// Every stored scalar in checkpoint order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for a store with the same layout.
    pub fn load_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.total_count() {
            return Err(Error::shape("load_flat", &[self.total_count()], &[values.len()]));
        }
        let mut offset = 0;
        for p in &mut self.entries {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|p| Parameter { name: p.name.clone(), value: p.value.cast(), trainable: p.trainable })
                .collect(),
        }
    }

    /// Overwrites buffers with the values recorded during a training pass.
    pub fn apply_buffer_updates(&mut self, updates: Vec<(ParamId, Vec<T>)>) {
        for (id, values) in updates {
            self.entries[id.0].value.data_mut().copy_from_slice(&values);
        }
    }
}
