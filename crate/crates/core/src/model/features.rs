use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// Width of a node feature row: position, velocity and every actuation.
pub fn feature_width(actuators: usize) -> usize {
    6 + actuators
}

/// A batch of equally sized episodes in normalised coordinates, stored time
/// major so that one step of the whole batch is a contiguous block.
///
/// Velocities are finite differences of consecutive positions multiplied by
/// `velocity_scale`; the velocity at step 0 is zero.
#[derive(Clone, Debug)]
pub struct Episodes<S> {
    pub batch: usize,
    pub nodes: usize,
    pub actuators: usize,
    pub steps: usize,
    pub velocity_scale: S,
    /// `[steps × batch·nodes × 3]`
    positions: Vec<S>,
    /// `[steps × batch × actuators]`
    actions: Vec<S>,
    owner: Arc<[usize]>,
}

impl<S: Scalar> Episodes<S> {
    pub fn new(
        batch: usize,
        nodes: usize,
        actuators: usize,
        steps: usize,
        velocity_scale: S,
        positions: Vec<S>,
        actions: Vec<S>,
    ) -> Result<Self> {
        if positions.len() != steps * batch * nodes * 3 || actions.len() != steps * batch * actuators {
            return Err(Error::InvalidShape {
                op: "episodes",
                detail: format!(
                    "{} positions and {} actions for batch {batch}, {nodes} nodes, {actuators} actuators, {steps} steps",
                    positions.len(),
                    actions.len()
                ),
            });
        }
        let owner: Vec<usize> = (0..batch * nodes).map(|r| r / nodes).collect();
        Ok(Episodes {
            batch,
            nodes,
            actuators,
            steps,
            velocity_scale,
            positions,
            actions,
            owner: owner.into(),
        })
    }

    pub fn feature_width(&self) -> usize {
        feature_width(self.actuators)
    }

    pub fn rows(&self) -> usize {
        self.batch * self.nodes
    }

    fn position_block(&self, t: usize) -> &[S] {
        let w = self.rows() * 3;
        &self.positions[t * w..(t + 1) * w]
    }

    fn action_block(&self, t: usize) -> &[S] {
        let w = self.batch * self.actuators;
        &self.actions[t * w..(t + 1) * w]
    }

    /// Positions of every node at step `t`, `[batch·nodes × 3]`.
    pub fn positions_at(&self, t: usize) -> Tensor<S> {
        Tensor::new(vec![self.rows(), 3], self.position_block(t).to_vec()).expect("block size")
    }

    /// Actuation of every episode at step `t`, `[batch × actuators]`.
    pub fn actions_at(&self, t: usize) -> Tensor<S> {
        Tensor::new(vec![self.batch, self.actuators], self.action_block(t).to_vec()).expect("block size")
    }

    /// Positions over a range of steps, `[len × batch·nodes × 3]`.
    pub fn positions_range(&self, steps: Range<usize>) -> Tensor<S> {
        let w = self.rows() * 3;
        let len = steps.len();
        Tensor::new(
            vec![len, self.rows(), 3],
            self.positions[steps.start * w..steps.end * w].to_vec(),
        )
        .expect("block size")
    }

    /// Node features at step `t` from recorded data.
    pub fn features<'t>(&self, tape: &'t Tape<S>, t: usize) -> Result<Var<'t, S>> {
        let pos = tape.constant(self.positions_at(t));
        let prev = tape.constant(self.positions_at(t.saturating_sub(1)));
        self.features_from(tape, pos, prev, t)
    }

    /// Node features built from (possibly predicted) positions at `t` and
    /// `t − 1`, with the recorded actuation at `t`.
    pub fn features_from<'t>(&self, tape: &'t Tape<S>, pos: Var<'t, S>, prev: Var<'t, S>, t: usize) -> Result<Var<'t, S>> {
        let vel = pos.sub(prev)?.scale(self.velocity_scale)?;
        let acts = tape.constant(self.actions_at(t)).gather_rows(&self.owner)?;
        tape.concat(&[pos, vel, acts], 1)
    }

    /// Flattened per-node feature windows over `steps`, `[batch·nodes × len·D_x]`,
    /// the encoder input.
    pub fn window(&self, steps: Range<usize>) -> Result<Tensor<S>> {
        if steps.is_empty() || steps.end > self.steps {
            return Err(Error::InvalidShape {
                op: "window",
                detail: format!("steps {steps:?} of {}", self.steps),
            });
        }
        let dx = self.feature_width();
        let len = steps.len();
        let mut out = vec![S::zero(); self.rows() * len * dx];
        for (w, t) in steps.enumerate() {
            let pos = self.position_block(t);
            let prev = self.position_block(t.saturating_sub(1));
            let act = self.action_block(t);
            for r in 0..self.rows() {
                let o = (r * len + w) * dx;
                for d in 0..3 {
                    out[o + d] = pos[r * 3 + d];
                    out[o + 3 + d] = (pos[r * 3 + d] - prev[r * 3 + d]) * self.velocity_scale;
                }
                let b = r / self.nodes;
                out[o + 6..o + dx].copy_from_slice(&act[b * self.actuators..(b + 1) * self.actuators]);
            }
        }
        Tensor::new(vec![self.rows(), len * dx], out)
    }

    /// Reorders the nodes of every episode so that slot `p` holds node `perm[p]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.nodes {
            return Err(Error::config(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.nodes
            )));
        }
        let mut positions = self.positions.clone();
        for t in 0..self.steps {
            for b in 0..self.batch {
                for (p, &src) in perm.iter().enumerate() {
                    let dst = ((t * self.batch + b) * self.nodes + p) * 3;
                    let from = ((t * self.batch + b) * self.nodes + src) * 3;
                    positions[dst..dst + 3].copy_from_slice(&self.positions[from..from + 3]);
                }
            }
        }
        Episodes::new(
            self.batch,
            self.nodes,
            self.actuators,
            self.steps,
            self.velocity_scale,
            positions,
            self.actions.clone(),
        )
    }

    /// Converts to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Episodes<T> {
        let conv = |v: &[S]| v.iter().map(|&x| T::of(x.as_f64())).collect();
        Episodes::new(
            self.batch,
            self.nodes,
            self.actuators,
            self.steps,
            T::of(self.velocity_scale.as_f64()),
            conv(&self.positions),
            conv(&self.actions),
        )
        .expect("same sizes")
    }
}
