//! Stand-in soft-hand simulator and dataset generation.
//!
//! Each finger is a chain of three phalanges whose joint angles follow a
//! damped, coupled second-order ODE driven by a cable-pull signal. Fingers
//! sit on the vertices of a unit dodecagon and curl in the plane spanned by
//! their radial direction and the z axis. One keypoint is tracked per
//! phalanx, so a scene with `F` fingers has `3F` nodes.

mod io;
mod motion;
mod physics;
mod splits;

pub use io::{read_dataset, read_split, write_dataset, write_split, TENSORS_MAGIC, TENSORS_VERSION};
pub use motion::{actuation_signal, MotionFamily, MotionSpec};
pub use physics::{ground_truth_graph, simulate, simulate_angles, Dynamics};
pub use splits::{
    generate_splits, generate_splits_with, training_configurations, DatasetSplit, GenerateOptions, Manifest,
    SplitName,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recorded steps per episode.
pub const STEPS: usize = 100;
/// Recording rate in Hz.
pub const SAMPLE_RATE: f64 = 8.0;
pub const NODES_PER_FINGER: usize = 3;
pub const DODECAGON_VERTICES: usize = 12;
pub const BASE_RADIUS: f64 = 1.0;
/// Stiffness values used for training scenes, in 1/s².
pub const TRAIN_ELASTICITIES: [f64; 4] = [4.0, 6.0, 8.0, 10.0];
pub const DEFAULT_GAINS: [f64; 3] = [0.6, 0.9, 1.2];
pub const DEFAULT_LINK_LENGTH: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerConfig {
    /// Dodecagon vertex holding the finger base.
    pub vertex: usize,
    /// Joint stiffness k_e in 1/s².
    pub elasticity: f64,
    /// Curl per phalanx at full cable pull, radians, proximal first.
    pub gains: [f64; 3],
    pub link_length: f64,
}

impl FingerConfig {
    pub fn new(vertex: usize, elasticity: f64) -> Self {
        FingerConfig {
            vertex,
            elasticity,
            gains: DEFAULT_GAINS,
            link_length: DEFAULT_LINK_LENGTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub fingers: Vec<FingerConfig>,
    pub motions: Vec<MotionSpec>,
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.fingers.len();
        if !(3..=4).contains(&n) {
            return Err(Error::config(format!("scene needs 3 or 4 fingers, got {n}")));
        }
        if self.motions.len() != n {
            return Err(Error::config(format!(
                "{} motions for {} fingers",
                self.motions.len(),
                n
            )));
        }
        for (i, f) in self.fingers.iter().enumerate() {
            if f.vertex >= DODECAGON_VERTICES {
                return Err(Error::config(format!("vertex {} out of range", f.vertex)));
            }
            if self.fingers[..i].iter().any(|g| g.vertex == f.vertex) {
                return Err(Error::config(format!("vertex {} used twice", f.vertex)));
            }
            if !(f.elasticity > 0.0) || !(f.link_length > 0.0) {
                return Err(Error::config("elasticity and link length must be positive"));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.fingers.iter().map(|f| f.vertex).collect()
    }
}

/// Provenance of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub config_id: usize,
    pub vertices: Vec<usize>,
    pub elasticity: f64,
    pub family: MotionFamily,
    pub seed: u64,
}

/// One recorded episode.
///
/// `positions` is `[nodes × steps × 3]`, `actuation` is `[fingers × steps]`,
/// `edges` is a `[nodes × nodes]` 0/1 adjacency. `permutation[p]` is the
/// original index of the node stored at position `p` (identity unless the
/// nodes were shuffled).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub nodes: usize,
    pub actuators: usize,
    pub steps: usize,
    pub positions: Vec<f32>,
    pub actuation: Vec<f32>,
    pub edges: Vec<u8>,
    pub permutation: Vec<u32>,
    pub meta: SampleMeta,
}

impl Sample {
    #[inline]
    pub fn position(&self, node: usize, step: usize) -> [f32; 3] {
        let o = (node * self.steps + step) * 3;
        [self.positions[o], self.positions[o + 1], self.positions[o + 2]]
    }

    #[inline]
    pub fn action(&self, actuator: usize, step: usize) -> f32 {
        self.actuation[actuator * self.steps + step]
    }

    #[inline]
    pub fn edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.nodes + to] != 0
    }

    /// Phalanx index (0 = proximal) of the node stored at `node`.
    pub fn phalanx(&self, node: usize) -> usize {
        self.permutation[node] as usize % NODES_PER_FINGER
    }

    /// Reorders nodes so that stored position `p` holds current node `perm[p]`.
    /// Composes with any permutation already applied.
    pub fn permuted(&self, perm: &[usize]) -> Result<Sample> {
        check_permutation(perm, self.nodes)?;
        let n = self.nodes;
        let mut out = self.clone();
        for (p, &src) in perm.iter().enumerate() {
            let len = self.steps * 3;
            out.positions[p * len..(p + 1) * len].copy_from_slice(&self.positions[src * len..(src + 1) * len]);
            out.permutation[p] = self.permutation[src];
            for (q, &dst) in perm.iter().enumerate() {
                out.edges[p * n + q] = self.edges[src * n + dst];
            }
        }
        Ok(out)
    }

    /// Undoes the stored permutation, restoring the original node order.
    pub fn unshuffled(&self) -> Result<Sample> {
        let mut inverse = vec![0usize; self.nodes];
        for (p, &orig) in self.permutation.iter().enumerate() {
            inverse[orig as usize] = p;
        }
        self.permuted(&inverse)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e != 0).count()
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::config(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::config(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}
