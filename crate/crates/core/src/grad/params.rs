use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use super::Tensor;

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed) as u64
}

/// An ordered list of parameter tensors.
///
/// Every mutable access bumps a version counter; a [`super::Tape`] remembers
/// the identity and version it was recorded against and refuses to run
/// backward once either has changed.
#[derive(Debug)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    id: u64,
    version: u64,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        ParamSet {
            tensors: self.tensors.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

impl ParamSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ParamSet {
            tensors,
            id: fresh_id(),
            version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        self.version += 1;
        &mut self.tensors[i]
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn stamp(&self) -> (u64, u64) {
        (self.id, self.version)
    }
}
