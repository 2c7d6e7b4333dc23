use std::collections::HashMap;
use std::ops::Index;

use rand::Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

/// Tape handles of every parameter for one forward pass.
#[derive(Clone, Debug)]
pub struct Bindings(Vec<Var>);

impl Bindings {
    /// Wraps tape handles listed in parameter registration order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bindings(vars)
    }
}

impl Index<ParamId> for Bindings {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::invalid("name", format!("duplicate parameter {name}")));
        }
        self.lookup.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(value.with_requires_grad(true));
        Ok(ParamId(self.tensors.len() - 1))
    }

    /// Registers a tensor drawn from `U(-scale, scale)`.
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        self.register(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn register_filled(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: f64,
    ) -> Result<ParamId> {
        self.register(name, Tensor::filled(shape, value))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        Bindings(self.tensors.iter().map(|t| tape.leaf(t.clone())).collect())
    }

    /// Adds the gradients accumulated on the tape leaves into the store.
    pub fn absorb_grads(&mut self, tape: &Tape, bindings: &Bindings) {
        for (t, &v) in self.tensors.iter_mut().zip(&bindings.0) {
            if let Some(g) = tape.grad(v) {
                t.accumulate_grad(g);
            }
        }
    }

    /// Adds gradients computed by [`Tape::gradients`] into the store.
    pub fn absorb(&mut self, grads: &Gradients, bindings: &Bindings) {
        for (t, &v) in self.tensors.iter_mut().zip(&bindings.0) {
            if let Some(g) = grads.get(v) {
                t.accumulate_grad(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }
}
