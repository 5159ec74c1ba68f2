use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Episodes;
use crate::sim::Sample;

const STD_FLOOR: f64 = 1e-8;

/// Per-axis position statistics of the training split, plus the factor that
/// maps normalised per-step displacements to unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub velocity_scale: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            mean: [0.0; 3],
            std: [1.0; 3],
            velocity_scale: 1.0,
        }
    }
}

impl NormStats {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for s in samples {
            for p in s.positions.chunks_exact(3) {
                for d in 0..3 {
                    let v = p[d] as f64;
                    sum[d] += v;
                    sq[d] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::config("normalisation statistics need at least one position"));
        }
        let n = count as f64;
        let mean = sum.map(|s| s / n);
        let mut std = [0.0; 3];
        for d in 0..3 {
            std[d] = (sq[d] / n - mean[d] * mean[d]).max(0.0).sqrt().max(STD_FLOOR);
        }
        let stats = NormStats {
            mean,
            std,
            velocity_scale: 1.0,
        };

        let mut energy = 0.0;
        let mut terms = 0usize;
        for s in samples {
            for node in 0..s.nodes {
                for t in 1..s.steps {
                    let (a, b) = (s.position(node, t), s.position(node, t - 1));
                    for d in 0..3 {
                        let step = (a[d] as f64 - b[d] as f64) / stats.std[d];
                        energy += step * step;
                        terms += 1;
                    }
                }
            }
        }
        let rms = if terms == 0 { 0.0 } else { (energy / terms as f64).sqrt() };
        Ok(NormStats {
            velocity_scale: 1.0 / rms.max(STD_FLOOR),
            ..stats
        })
    }

    pub fn normalize(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| (p[d] - self.mean[d]) / self.std[d])
    }

    pub fn denormalize(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| p[d] * self.std[d] + self.mean[d])
    }

    /// Builds a normalised batch from samples with equal node counts.
    ///
    /// Actuation rows are zero padded to `actuators`. When `pad_nodes` exceeds
    /// the node count, extra nodes are appended that rest at the mean position.
    pub fn episodes(&self, samples: &[&Sample], actuators: usize, pad_nodes: Option<usize>) -> Result<Episodes<f32>> {
        let first = samples
            .first()
            .ok_or_else(|| Error::config("cannot batch zero samples"))?;
        let (real, steps) = (first.nodes, first.steps);
        let nodes = pad_nodes.unwrap_or(real).max(real);
        let batch = samples.len();
        let mut positions = vec![0.0f32; steps * batch * nodes * 3];
        let mut actions = vec![0.0f32; steps * batch * actuators];
        for (b, s) in samples.iter().enumerate() {
            if s.nodes != real || s.steps != steps {
                return Err(Error::config(format!(
                    "batch mixes {}×{} and {}×{} samples",
                    real, steps, s.nodes, s.steps
                )));
            }
            if s.actuators > actuators {
                return Err(Error::WidthMismatch {
                    expected: actuators,
                    actual: s.actuators,
                });
            }
            for t in 0..steps {
                for n in 0..real {
                    let p = s.position(n, t);
                    let q = self.normalize([p[0] as f64, p[1] as f64, p[2] as f64]);
                    let o = ((t * batch + b) * nodes + n) * 3;
                    for d in 0..3 {
                        positions[o + d] = q[d] as f32;
                    }
                }
                for a in 0..s.actuators {
                    actions[(t * batch + b) * actuators + a] = s.action(a, t);
                }
            }
        }
        Episodes::new(batch, nodes, actuators, steps, self.velocity_scale as f32, positions, actions)
    }
}
