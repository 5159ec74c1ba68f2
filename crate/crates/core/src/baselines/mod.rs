//! Non-structured predictors over the flattened hand state.
//!
//! A flat state concatenates every node position, every node velocity and
//! every actuation at one step, so its width `6·N + N_a` is fixed when the
//! model is built. All learned baselines predict a position increment, in
//! velocity feature units, that is added to the last position, and all receive the recorded actuation at
//! each rollout step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Episodes, Linear};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LastPosition,
    Linear,
    Mlp,
    Lstm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::LastPosition,
        BaselineKind::Linear,
        BaselineKind::Mlp,
        BaselineKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::LastPosition => "last_position",
            BaselineKind::Linear => "linear",
            BaselineKind::Mlp => "mlp",
            BaselineKind::Lstm => "lstm",
        }
    }

    pub fn default_context(self) -> usize {
        match self {
            BaselineKind::LastPosition => 1,
            BaselineKind::Linear | BaselineKind::Mlp => 5,
            BaselineKind::Lstm => 50,
        }
    }

    pub fn default_hidden(self) -> usize {
        match self {
            BaselineKind::LastPosition | BaselineKind::Linear => 0,
            BaselineKind::Mlp => 256,
            BaselineKind::Lstm => 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub nodes: usize,
    pub actuators: usize,
    /// Recorded steps observed before the first prediction.
    pub context: usize,
    pub hidden: usize,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, nodes: usize, actuators: usize) -> Self {
        BaselineConfig {
            kind,
            nodes,
            actuators,
            context: kind.default_context(),
            hidden: kind.default_hidden(),
        }
    }

    /// Flat state width `6·N + N_a`.
    pub fn width(&self) -> usize {
        6 * self.nodes + self.actuators
    }
}

#[derive(Clone, Debug)]
enum Net {
    None,
    Linear(Linear),
    Mlp([Linear; 3]),
    Lstm { input: Linear, recurrent: Linear, head: Linear, width: usize },
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub config: BaselineConfig,
    net: Net,
}

/// Flat states `[batch × 6N + N_a]` from node positions at `t` and `t − 1`.
fn flat_state<'t, S: Scalar>(
    tape: &'t Tape<S>,
    episodes: &Episodes<S>,
    pos: Var<'t, S>,
    prev: Var<'t, S>,
    t: usize,
) -> Result<Var<'t, S>> {
    let b = episodes.batch;
    let w = episodes.nodes * 3;
    let vel = pos.sub(prev)?.scale(episodes.velocity_scale)?;
    let acts = tape.constant(episodes.actions_at(t));
    tape.concat(&[pos.reshape(&[b, w])?, vel.reshape(&[b, w])?, acts], 1)
}

impl Baseline {
    pub fn new<S: Scalar>(config: BaselineConfig, store: &mut ParamStore<S>, rng: &mut Rng) -> Result<Self> {
        if config.nodes == 0 || config.context == 0 {
            return Err(Error::config("baseline needs at least one node and one context step"));
        }
        let w = config.width();
        let out = config.nodes * 3;
        let h = config.hidden;
        let net = match config.kind {
            BaselineKind::LastPosition => Net::None,
            BaselineKind::Linear => Net::Linear(Linear::new(store, "linear", config.context * w, out, rng)),
            BaselineKind::Mlp => {
                if h == 0 {
                    return Err(Error::config("mlp baseline needs a positive hidden width"));
                }
                Net::Mlp([
                    Linear::new(store, "mlp.0", config.context * w, h, rng),
                    Linear::new(store, "mlp.1", h, h, rng),
                    Linear::new(store, "mlp.2", h, out, rng),
                ])
            }
            BaselineKind::Lstm => {
                if h == 0 {
                    return Err(Error::config("lstm baseline needs a positive hidden width"));
                }
                let input = Linear::new(store, "lstm.input", w, 4 * h, rng);
                let recurrent = Linear::new(store, "lstm.recurrent", h, 4 * h, rng);
                // forget gates start open
                let bias = store.tensor_mut(input.bias).data_mut();
                bias[h..2 * h].iter_mut().for_each(|v| *v = S::one());
                let head = Linear::new(store, "lstm.head", h, out, rng);
                Net::Lstm {
                    input,
                    recurrent,
                    head,
                    width: h,
                }
            }
        };
        Ok(Baseline { config, net })
    }

    pub fn kind(&self) -> BaselineKind {
        self.config.kind
    }

    /// Zeroes the output layer so that every prediction equals the last position.
    pub fn zero_head<S: Scalar>(&self, store: &mut ParamStore<S>) {
        match &self.net {
            Net::None => {}
            Net::Linear(l) | Net::Mlp([_, _, l]) => l.zero(store),
            Net::Lstm { head, .. } => head.zero(store),
        }
    }

    fn check_width<S: Scalar>(&self, episodes: &Episodes<S>) -> Result<()> {
        let actual = 6 * episodes.nodes + episodes.actuators;
        if self.config.kind != BaselineKind::LastPosition && actual != self.config.width() {
            return Err(Error::WidthMismatch {
                expected: self.config.width(),
                actual,
            });
        }
        Ok(())
    }

    /// Predicts positions `[batch·nodes × 3]` for steps `start+1 ..= start+horizon`.
    pub fn rollout<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        episodes: &Episodes<S>,
        start: usize,
        horizon: usize,
    ) -> Result<Vec<Var<'t, S>>> {
        self.check_width(episodes)?;
        if horizon == 0 {
            return Ok(Vec::new());
        }
        let context = self.config.context;
        if context > start + 1 || start + horizon >= episodes.steps {
            return Err(Error::InvalidShape {
                op: "baseline rollout",
                detail: format!(
                    "start {start}, context {context}, horizon {horizon} with {} recorded steps",
                    episodes.steps
                ),
            });
        }
        let rows = episodes.batch * episodes.nodes;
        let last = tape.constant(episodes.positions_at(start));
        if let Net::None = self.net {
            return Ok(vec![last; horizon]);
        }

        let mut states = Vec::with_capacity(context + horizon);
        for t in start + 1 - context..=start {
            let pos = tape.constant(episodes.positions_at(t));
            let prev = tape.constant(episodes.positions_at(t.saturating_sub(1)));
            states.push(flat_state(tape, episodes, pos, prev, t)?);
        }

        let mut preds: Vec<Var<'t, S>> = Vec::with_capacity(horizon);
        let mut lstm_state = match &self.net {
            Net::Lstm { width, .. } => {
                let zeros = tape.constant(Tensor::zeros(vec![episodes.batch, *width]));
                let mut hc = (zeros, zeros);
                for &s in &states[..context - 1] {
                    hc = self.lstm_cell(tape, store, s, hc)?;
                }
                Some(hc)
            }
            _ => None,
        };
        let delta_scale = S::one() / episodes.velocity_scale;
        let mut pos = last;
        let mut prev = tape.constant(episodes.positions_at(start.saturating_sub(1)));
        for t in start..start + horizon {
            if t > start {
                states.push(flat_state(tape, episodes, pos, prev, t)?);
            }
            let delta = match &self.net {
                Net::None => unreachable!(),
                Net::Linear(l) => l.forward(tape, store, self.window(tape, &states)?)?,
                Net::Mlp([a, b, c]) => {
                    let h = a.forward(tape, store, self.window(tape, &states)?)?.tanh()?;
                    let h = b.forward(tape, store, h)?.tanh()?;
                    c.forward(tape, store, h)?
                }
                Net::Lstm { head, .. } => {
                    let hc = self.lstm_cell(tape, store, *states.last().expect("context"), lstm_state.expect("lstm"))?;
                    lstm_state = Some(hc);
                    head.forward(tape, store, hc.0)?
                }
            };
            let next = pos.add(delta.reshape(&[rows, 3])?.scale(delta_scale)?)?;
            prev = pos;
            pos = next;
            preds.push(next);
        }
        Ok(preds)
    }

    fn window<'t, S: Scalar>(&self, tape: &'t Tape<S>, states: &[Var<'t, S>]) -> Result<Var<'t, S>> {
        tape.concat(&states[states.len() - self.config.context..], 1)
    }

    fn lstm_cell<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        (h, c): (Var<'t, S>, Var<'t, S>),
    ) -> Result<(Var<'t, S>, Var<'t, S>)> {
        let Net::Lstm {
            input, recurrent, width, ..
        } = &self.net
        else {
            return Err(Error::config("not an lstm baseline"));
        };
        let w = *width;
        let gates = input.forward(tape, store, x)?.add(recurrent.forward(tape, store, h)?)?;
        let i = gates.slice(1, 0, w)?.sigmoid()?;
        let f = gates.slice(1, w, w)?.sigmoid()?;
        let g = gates.slice(1, 2 * w, w)?.tanh()?;
        let o = gates.slice(1, 3 * w, w)?.sigmoid()?;
        let c = f.mul(c)?.add(i.mul(g)?)?;
        let h = o.mul(c.tanh()?)?;
        Ok((h, c))
    }

    /// Hidden states of the LSTM while reading recorded steps `steps`.
    pub fn lstm_hidden_trace<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        episodes: &Episodes<S>,
        steps: std::ops::Range<usize>,
    ) -> Result<Vec<Tensor<S>>> {
        self.check_width(episodes)?;
        let Net::Lstm { width, .. } = &self.net else {
            return Err(Error::config("not an lstm baseline"));
        };
        let tape = Tape::new();
        let zeros = tape.constant(Tensor::zeros(vec![episodes.batch, *width]));
        let mut hc = (zeros, zeros);
        let mut out = Vec::new();
        for t in steps {
            let pos = tape.constant(episodes.positions_at(t));
            let prev = tape.constant(episodes.positions_at(t.saturating_sub(1)));
            hc = self.lstm_cell(&tape, store, flat_state(&tape, episodes, pos, prev, t)?, hc)?;
            out.push(hc.0.value());
        }
        Ok(out)
    }
}
