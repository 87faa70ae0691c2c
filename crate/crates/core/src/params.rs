//! Named parameter registration onto a tape.
//!
//! Master parameter values live in plain [`Matrix`] structs between steps.
//! Each forward pass binds them onto a fresh tape through a [`Binder`], which
//! remembers registration order so gradients can be read back aligned with
//! the optimizer's state.

use crate::tensor::{Matrix, Tape, Tensor};

pub struct Binder {
    tape: Tape,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Binder {
    pub fn new(tape: &Tape) -> Self {
        Binder {
            tape: tape.clone(),
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn bind(&mut self, name: impl Into<String>, value: &Matrix) -> Tensor {
        let t = self.tape.leaf(value);
        self.names.push(name.into());
        self.tensors.push(t.clone());
        t
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Gradients for every bound parameter, in registration order. Call after
    /// `tape.backward`.
    pub fn grads(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| t.grad()).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
