use super::graph::GraphLayout;
use super::mlp::{aggregate_to_receivers, Mlp, OutputActivation};
use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tape, Var};

/// Message-passing encoder mapping per-node feature windows to edge-type
/// logits on the complete directed graph.
///
/// ```text
/// h1_j     = f_emb(window_j)
/// h1_(i,j) = f_e1([h1_i, h1_j])
/// h2_j     = f_v1(Σ_{i≠j} h1_(i,j))
/// logits   = f_e2([h2_i, h2_j])
/// ```
#[derive(Clone, Debug)]
pub struct Encoder {
    pub f_emb: Mlp,
    pub f_e1: Mlp,
    pub f_v1: Mlp,
    pub f_e2: Mlp,
}

impl Encoder {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, input: usize, hidden: usize, edge_types: usize, rng: &mut Rng) -> Self {
        let tanh = OutputActivation::Tanh;
        Encoder {
            f_emb: Mlp::new(store, "encoder.f_emb", [input, hidden, hidden], tanh, rng),
            f_e1: Mlp::new(store, "encoder.f_e1", [2 * hidden, hidden, hidden], tanh, rng),
            f_v1: Mlp::new(store, "encoder.f_v1", [hidden, hidden, hidden], tanh, rng),
            f_e2: Mlp::new(
                store,
                "encoder.f_e2",
                [2 * hidden, hidden, edge_types],
                OutputActivation::Identity,
                rng,
            ),
        }
    }

    /// `window` is `[batch·nodes × T·D_x]`; the result is `[batch·edges × K]`
    /// in [`GraphLayout`] row order.
    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        window: Var<'t, S>,
        layout: &GraphLayout,
    ) -> Result<Var<'t, S>> {
        let h1 = self.f_emb.forward(tape, store, window)?;
        let e1 = self.f_e1.forward_edges(tape, store, h1, layout)?;
        let h2 = self.f_v1.forward(tape, store, aggregate_to_receivers(e1, layout)?)?;
        self.f_e2.forward_edges(tape, store, h2, layout)
    }
}
