use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_store_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
///
/// Every store carries a process-unique identity so that gradients recorded
/// in a [`crate::Graph`] are routed back to the store they came from, even
/// when several stores (actor, critics, targets) feed the same graph.
#[derive(Debug)]
pub struct ParamStore<T> {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            id: fresh_store_id(),
            names: self.names.clone(),
            tensors: self.tensors.clone(),
        }
    }
}

impl<T: Scalar> PartialEq for ParamStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            id: fresh_store_id(),
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub(crate) fn store_id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Overwrites every tensor with the same-named tensor from `source`.
    pub fn copy_from(&mut self, source: &ParamStore<T>) -> Result<()> {
        self.check_layout(source)?;
        for (dst, src) in self.tensors.iter_mut().zip(&source.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// `self = tau * source + (1 - tau) * self`, elementwise.
    pub fn polyak_update(&mut self, source: &ParamStore<T>, tau: T) -> Result<()> {
        self.check_layout(source)?;
        let keep = T::one() - tau;
        for (dst, src) in self.tensors.iter_mut().zip(&source.tensors) {
            for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = tau * s + keep * *d;
            }
        }
        Ok(())
    }

    /// Replaces values from a list of named tensors; every parameter must be
    /// present with a matching shape.
    pub fn load_named(&mut self, named: &[(String, Tensor<T>)]) -> Result<()> {
        for (name, dst) in self.names.iter().zip(self.tensors.iter_mut()) {
            let (_, src) =
                named
                    .iter()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| TensorError::Format {
                        expected: format!("tensor {name}"),
                        found: "nothing".into(),
                    })?;
            if src.shape() != dst.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load",
                    left: dst.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            *dst = src.clone();
        }
        Ok(())
    }

    fn check_layout(&self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(TensorError::InvalidArgument(
                "parameter stores have different layouts".into(),
            ));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "param layout",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}
