use super::{Gradients, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors with gradient buffers of matching shape.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
    grads: Vec<Vec<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        self.grads.push(vec![S::zero(); value.len()]);
        self.values.push(value);
        self.names.push(name.into());
        ParamId(self.values.len() - 1)
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| S::of(rng.uniform_range(-bound, bound)))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data).expect("sized"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[S] {
        &self.grads[id.0]
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<S>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::ShapeMismatch {
                op: "param set",
                lhs: self.values[id.0].shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = S::zero());
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients<S>) {
        for (id, g) in grads.params() {
            for (d, &s) in self.grads[id.0].iter_mut().zip(g) {
                *d = *d + s;
            }
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().flatten().all(|x| x.is_finite())
    }

    /// Copy at another scalar width; gradient buffers start at zero.
    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            out.add(name.clone(), value.cast());
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}
