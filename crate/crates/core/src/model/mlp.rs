use std::sync::Arc;

use super::graph::GraphLayout;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Affine map `x·W + b` over the last axis of a 2-D input.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: store.add_glorot(format!("{name}.weight"), fan_in, fan_out, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[fan_out]),
            fan_in,
            fan_out,
        }
    }

    pub fn forward<'t, S: Scalar>(&self, tape: &'t Tape<S>, store: &ParamStore<S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let width = x.shape().last().copied().unwrap_or(0);
        if width != self.fan_in {
            return Err(Error::WidthMismatch {
                expected: self.fan_in,
                actual: width,
            });
        }
        x.matmul(tape.param(store, self.weight))?
            .add(tape.param(store, self.bias))
    }

    /// Zeroes weight and bias, making the layer output identically zero.
    pub fn zero<S: Scalar>(&self, store: &mut ParamStore<S>) {
        for id in [self.weight, self.bias] {
            store.tensor_mut(id).data_mut().iter_mut().for_each(|v| *v = S::zero());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Tanh,
    Identity,
}

/// Two-layer perceptron with a tanh hidden layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
    pub activation: OutputActivation,
}

impl Mlp {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        sizes: [usize; 3],
        activation: OutputActivation,
        rng: &mut Rng,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.0"), sizes[0], sizes[1], rng),
            out: Linear::new(store, &format!("{name}.1"), sizes[1], sizes[2], rng),
            activation,
        }
    }

    pub fn forward<'t, S: Scalar>(&self, tape: &'t Tape<S>, store: &ParamStore<S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let h = self.hidden.forward(tape, store, x)?.tanh()?;
        self.head(tape, store, h)
    }

    fn head<'t, S: Scalar>(&self, tape: &'t Tape<S>, store: &ParamStore<S>, h: Var<'t, S>) -> Result<Var<'t, S>> {
        let y = self.out.forward(tape, store, h)?;
        match self.activation {
            OutputActivation::Tanh => y.tanh(),
            OutputActivation::Identity => Ok(y),
        }
    }

    /// Applies the MLP to `[x_sender, x_receiver]` for every edge of `layout`.
    ///
    /// The first layer is split into its sender and receiver halves and
    /// evaluated per node before gathering, which equals evaluating it on the
    /// concatenated edge input.
    pub fn forward_edges<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        nodes: Var<'t, S>,
        layout: &GraphLayout,
    ) -> Result<Var<'t, S>> {
        self.forward_pairs(tape, store, nodes, &layout.senders, &layout.receivers)
    }

    /// [`Mlp::forward_edges`] restricted to the given sender and receiver rows.
    pub fn forward_pairs<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        nodes: Var<'t, S>,
        senders: &Arc<[usize]>,
        receivers: &Arc<[usize]>,
    ) -> Result<Var<'t, S>> {
        let width = nodes.shape().last().copied().unwrap_or(0);
        if 2 * width != self.hidden.fan_in {
            return Err(Error::WidthMismatch {
                expected: self.hidden.fan_in / 2,
                actual: width,
            });
        }
        let w = tape.param(store, self.hidden.weight);
        let from_sender = nodes.matmul(w.slice(0, 0, width)?)?;
        let from_receiver = nodes.matmul(w.slice(0, width, width)?)?;
        let pre = from_sender
            .gather_rows(senders)?
            .add(from_receiver.gather_rows(receivers)?)?
            .add(tape.param(store, self.hidden.bias))?;
        self.head(tape, store, pre.tanh()?)
    }
}

/// Sums per-edge rows into their receiving node: `[B·E, H] → [B·N, H]`.
pub fn aggregate_to_receivers<'t, S: Scalar>(edges: Var<'t, S>, layout: &GraphLayout) -> Result<Var<'t, S>> {
    let width = edges.shape()[1];
    edges
        .reshape(&[layout.node_rows(), layout.nodes - 1, width])?
        .sum(1)
}
