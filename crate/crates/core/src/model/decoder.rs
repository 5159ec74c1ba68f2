use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::Episodes;
use super::graph::GraphLayout;
use super::mlp::{aggregate_to_receivers, Linear, Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Mlp,
    Rnn,
}

impl DecoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderKind::Mlp => "mlp",
            DecoderKind::Rnn => "rnn",
        }
    }
}

/// Gated recurrent cell over node rows: `h' = n + z ⊙ (h − n)`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: Linear,
    pub hidden: Linear,
    pub width: usize,
}

impl GruCell {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, input: usize, width: usize, rng: &mut Rng) -> Self {
        GruCell {
            input: Linear::new(store, &format!("{name}.input"), input, 3 * width, rng),
            hidden: Linear::new(store, &format!("{name}.hidden"), width, 3 * width, rng),
            width,
        }
    }

    pub fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        h: Var<'t, S>,
    ) -> Result<Var<'t, S>> {
        let w = self.width;
        let gi = self.input.forward(tape, store, x)?;
        let gh = self.hidden.forward(tape, store, h)?;
        let r = gi.slice(1, 0, w)?.add(gh.slice(1, 0, w)?)?.sigmoid()?;
        let z = gi.slice(1, w, w)?.add(gh.slice(1, w, w)?)?.sigmoid()?;
        let n = gi.slice(1, 2 * w, w)?.add(r.mul(gh.slice(1, 2 * w, w)?)?)?.tanh()?;
        n.add(z.mul(h.sub(n)?)?)
    }
}

/// Graph decoder predicting next-step positions from node features and a
/// per-edge distribution over edge types.
///
/// Each edge type `k` has its own message MLP; messages are weighted by
/// `z_(i,j),k`, summed over types and over senders. With `skip_null_edge`
/// type 0 carries no message.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub kind: DecoderKind,
    pub edge_mlps: Vec<Mlp>,
    pub node_mlp: Mlp,
    pub gru: Option<GruCell>,
    pub message_width: usize,
    pub skip_null_edge: bool,
}

/// Recurrent state carried between decoder steps.
pub type Hidden<'t, S> = Option<Var<'t, S>>;

impl Decoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        kind: DecoderKind,
        features: usize,
        hidden: usize,
        rnn_hidden: usize,
        edge_types: usize,
        skip_null_edge: bool,
        rng: &mut Rng,
    ) -> Self {
        let edge_mlps = (0..edge_types)
            .map(|k| {
                Mlp::new(
                    store,
                    &format!("decoder.f_e{k}"),
                    [2 * features, hidden, hidden],
                    OutputActivation::Tanh,
                    rng,
                )
            })
            .collect();
        let (gru, node_in) = match kind {
            DecoderKind::Mlp => (None, hidden),
            DecoderKind::Rnn => (
                Some(GruCell::new(store, "decoder.gru", hidden + features, rnn_hidden, rng)),
                rnn_hidden,
            ),
        };
        let node_mlp = Mlp::new(store, "decoder.f_v", [node_in, hidden, 3], OutputActivation::Identity, rng);
        Decoder {
            kind,
            edge_mlps,
            node_mlp,
            gru,
            message_width: hidden,
            skip_null_edge,
        }
    }

    pub fn edge_types(&self) -> usize {
        self.edge_mlps.len()
    }

    /// Zero recurrent state for `rows` nodes, or `None` for the MLP variant.
    pub fn initial_hidden<'t, S: Scalar>(&self, tape: &'t Tape<S>, rows: usize) -> Hidden<'t, S> {
        self.gru
            .as_ref()
            .map(|g| tape.constant(Tensor::zeros(vec![rows, g.width])))
    }

    /// Aggregated incoming messages per node, `[batch·nodes × H]`.
    pub fn messages<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        z: Var<'t, S>,
        layout: &GraphLayout,
    ) -> Result<Var<'t, S>> {
        let zs = z.shape();
        if zs != [layout.edge_rows(), self.edge_types()] {
            return Err(Error::ShapeMismatch {
                op: "decoder edges",
                lhs: vec![layout.edge_rows(), self.edge_types()],
                rhs: zs,
            });
        }
        if let Some(types) = hard_edge_types(z) {
            return self.selected_messages(tape, store, x, &types, layout);
        }
        let spread = tape.constant(Tensor::full(vec![1, self.message_width], S::one()));
        let mut total: Option<Var<'t, S>> = None;
        for (k, mlp) in self.edge_mlps.iter().enumerate() {
            if k == 0 && self.skip_null_edge {
                continue;
            }
            let weight = z.slice(1, k, 1)?.matmul(spread)?;
            let term = mlp.forward_edges(tape, store, x, layout)?.mul(weight)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        match total {
            Some(t) => aggregate_to_receivers(t, layout),
            None => Ok(tape.constant(Tensor::zeros(vec![layout.node_rows(), self.message_width]))),
        }
    }

    /// [`Decoder::messages`] for constant one-hot edge weights: each edge MLP
    /// runs only on the edges of its own type, and every receiver sums its
    /// incoming messages through a padded gather.
    fn selected_messages<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        types: &[usize],
        layout: &GraphLayout,
    ) -> Result<Var<'t, S>> {
        let width = self.message_width;
        let mut tables = Vec::new();
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); layout.node_rows()];
        let mut rows = 0;
        for (k, mlp) in self.edge_mlps.iter().enumerate() {
            if k == 0 && self.skip_null_edge {
                continue;
            }
            let edges: Vec<usize> = (0..types.len()).filter(|&e| types[e] == k).collect();
            if edges.is_empty() {
                continue;
            }
            let senders: Arc<[usize]> = edges.iter().map(|&e| layout.senders[e]).collect();
            let receivers: Arc<[usize]> = edges.iter().map(|&e| layout.receivers[e]).collect();
            tables.push(mlp.forward_pairs(tape, store, x, &senders, &receivers)?);
            for (m, &r) in receivers.iter().enumerate() {
                incoming[r].push(rows + m);
            }
            rows += edges.len();
        }
        let degree = incoming.iter().map(Vec::len).max().unwrap_or(0);
        if degree == 0 {
            return Ok(tape.constant(Tensor::zeros(vec![layout.node_rows(), width])));
        }
        tables.push(tape.constant(Tensor::zeros(vec![1, width])));
        let index: Arc<[usize]> = incoming
            .iter()
            .flat_map(|m| m.iter().copied().chain(std::iter::repeat(rows).take(degree - m.len())))
            .collect();
        tape.concat(&tables, 0)?
            .gather_rows(&index)?
            .reshape(&[layout.node_rows(), degree, width])?
            .sum(1)
    }

    /// One prediction step: returns `μ^{t+1}` and the updated hidden state.
    /// `pos` must be the position columns of `x`; the node MLP output is
    /// multiplied by `delta_scale` before it is added to `pos`.
    #[allow(clippy::too_many_arguments)]
    pub fn step<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        pos: Var<'t, S>,
        z: Var<'t, S>,
        hidden: Hidden<'t, S>,
        layout: &GraphLayout,
        delta_scale: S,
    ) -> Result<(Var<'t, S>, Hidden<'t, S>)> {
        let agg = self.messages(tape, store, x, z, layout)?;
        match &self.gru {
            None => Ok((pos.add(self.node_mlp.forward(tape, store, agg)?.scale(delta_scale)?)?, None)),
            Some(gru) => {
                let h = hidden.ok_or_else(|| Error::config("recurrent decoder step needs a hidden state"))?;
                let h = gru.forward(tape, store, tape.concat(&[agg, x], 1)?, h)?;
                Ok((pos.add(self.node_mlp.forward(tape, store, h)?.scale(delta_scale)?)?, Some(h)))
            }
        }
    }

    /// Predicts positions for steps `start+1 ..= start+horizon`.
    ///
    /// Steps `start+1−context ..= start` are fed from recorded data (teacher
    /// forcing); afterwards each prediction becomes the next input, with its
    /// velocity recomputed from the predictions and the recorded actuation
    /// substituted at every step. Node MLP outputs are increments in velocity
    /// feature units.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        episodes: &Episodes<S>,
        z: Var<'t, S>,
        layout: &GraphLayout,
        start: usize,
        context: usize,
        horizon: usize,
    ) -> Result<Vec<Var<'t, S>>> {
        if horizon == 0 {
            return Ok(Vec::new());
        }
        if context == 0 || context > start + 1 || start + horizon >= episodes.steps {
            return Err(Error::InvalidShape {
                op: "rollout",
                detail: format!(
                    "start {start}, context {context}, horizon {horizon} with {} recorded steps",
                    episodes.steps
                ),
            });
        }
        let delta_scale = S::one() / episodes.velocity_scale;
        let mut hidden = self.initial_hidden(tape, layout.node_rows());
        let mut mu = None;
        for t in start + 1 - context..=start {
            let x = episodes.features(tape, t)?;
            let pos = tape.constant(episodes.positions_at(t));
            let (m, h) = self.step(tape, store, x, pos, z, hidden, layout, delta_scale)?;
            mu = Some(m);
            hidden = h;
        }
        let mut preds = vec![mu.expect("context ≥ 1")];
        let mut prev = tape.constant(episodes.positions_at(start));
        for t in start + 1..start + horizon {
            let pos = *preds.last().expect("non-empty");
            let x = episodes.features_from(tape, pos, prev, t)?;
            let (m, h) = self.step(tape, store, x, pos, z, hidden, layout, delta_scale)?;
            preds.push(m);
            hidden = h;
            prev = pos;
        }
        Ok(preds)
    }
}

/// Edge type per row when `z` is a constant one-hot matrix.
fn hard_edge_types<S: Scalar>(z: Var<'_, S>) -> Option<Vec<usize>> {
    if z.requires_grad() {
        return None;
    }
    let k = z.shape()[1];
    z.with_data(|d| {
        d.chunks(k)
            .map(|row| {
                let hot = row.iter().position(|&v| v == S::one())?;
                row.iter()
                    .enumerate()
                    .all(|(c, &v)| c == hot || v == S::zero())
                    .then_some(hot)
            })
            .collect()
    })
}
