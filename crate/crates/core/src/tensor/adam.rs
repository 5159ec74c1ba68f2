use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step and must keep matching the store's shapes afterwards.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub config: AdamConfig,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> Option<&[S]> {
        self.first.get(index).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[S]> {
        self.second.get(index).map(Vec::as_slice)
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        if self.first.is_empty() {
            for id in store.ids() {
                let n = store.tensor(id).len();
                self.first.push(vec![S::zero(); n]);
                self.second.push(vec![S::zero(); n]);
            }
        }
        if self.first.len() != store.len() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                lhs: vec![self.first.len()],
                rhs: vec![store.len()],
            });
        }
        for id in store.ids() {
            if self.first[id.0].len() != store.tensor(id).len() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: vec![self.first[id.0].len()],
                    rhs: store.tensor(id).shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let one = S::one();
        let corr1 = S::of(1.0 - c.beta1.powi(self.step as i32));
        let corr2 = S::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (S::of(c.lr), S::of(c.eps));

        for id in store.ids() {
            let grad = store.grad(id).to_vec();
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let p = store.tensor_mut(id).data_mut();
            for i in 0..p.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
