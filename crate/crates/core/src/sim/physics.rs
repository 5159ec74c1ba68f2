use std::f64::consts::TAU;

use super::motion::actuation_signal;
use super::{Sample, SampleMeta, SceneConfig, BASE_RADIUS, DODECAGON_VERTICES, NODES_PER_FINGER};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Integration constants of the joint-angle model.
///
/// Per finger, with tracking error `e_i = θ_i − g_i·u`:
///
/// ```text
/// θ̈_i = −k_e·e_i − c·θ̇_i + κ·Σ_{neighbours m} (e_m − e_i),   c = 2ζ·√k_e
/// ```
///
/// integrated with semi-implicit Euler (velocity first) at `dt`, holding
/// `u` constant between recorded samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dynamics {
    /// κ in 1/s².
    pub coupling: f64,
    /// ζ; damping is `2ζ√k_e`.
    pub damping_ratio: f64,
    pub dt: f64,
    /// Any |θ| above this aborts the run.
    pub divergence_limit: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            coupling: 2.0,
            damping_ratio: 0.7,
            dt: 1.0 / 64.0,
            divergence_limit: 10.0,
        }
    }
}

/// Joint angles `[finger][step] → [θ1, θ2, θ3]` and the per-finger signals.
pub struct AngleTrace {
    pub angles: Vec<Vec<[f64; 3]>>,
    pub actuation: Vec<Vec<f64>>,
}

/// Integrates every finger of `scene` for `steps` recorded samples.
pub fn simulate_angles(scene: &SceneConfig, steps: usize, rate: f64, dynamics: &Dynamics) -> Result<AngleTrace> {
    scene.validate()?;
    let substeps = ((1.0 / (rate * dynamics.dt)).round() as usize).max(1);
    let dt = 1.0 / (rate * substeps as f64);
    let mut angles = Vec::with_capacity(scene.fingers.len());
    let mut actuation = Vec::with_capacity(scene.fingers.len());

    for (f, (finger, motion)) in scene.fingers.iter().zip(&scene.motions).enumerate() {
        let mut noise = Rng::derived(scene.seed, &[f as u64]);
        let u = actuation_signal(motion, steps, rate, &mut noise)?;
        let k = finger.elasticity;
        let c = 2.0 * dynamics.damping_ratio * k.sqrt();
        let kappa = dynamics.coupling;
        let g = finger.gains;

        let mut theta = [0.0f64; 3];
        let mut omega = [0.0f64; 3];
        let mut trace = Vec::with_capacity(steps);
        trace.push(theta);
        for step in 1..steps {
            let drive = u[step - 1];
            for _ in 0..substeps {
                let e = [theta[0] - g[0] * drive, theta[1] - g[1] * drive, theta[2] - g[2] * drive];
                let acc = [
                    -k * e[0] - c * omega[0] + kappa * (e[1] - e[0]),
                    -k * e[1] - c * omega[1] + kappa * ((e[0] - e[1]) + (e[2] - e[1])),
                    -k * e[2] - c * omega[2] + kappa * (e[1] - e[2]),
                ];
                for i in 0..3 {
                    omega[i] += acc[i] * dt;
                    theta[i] += omega[i] * dt;
                }
            }
            if let Some(&bad) = theta.iter().find(|t| !(t.abs() <= dynamics.divergence_limit)) {
                return Err(Error::Diverged { step, angle: bad.abs() });
            }
            trace.push(theta);
        }
        angles.push(trace);
        actuation.push(u);
    }
    Ok(AngleTrace { angles, actuation })
}

/// Keypoint of each phalanx tip for one finger pose.
pub(crate) fn finger_keypoints(vertex: usize, link: f64, theta: &[f64; 3]) -> [[f64; 3]; 3] {
    let alpha = TAU * vertex as f64 / DODECAGON_VERTICES as f64;
    let radial = [alpha.cos(), alpha.sin()];
    let mut p = [BASE_RADIUS * radial[0], BASE_RADIUS * radial[1], 0.0];
    let mut bend = 0.0;
    let mut out = [[0.0; 3]; 3];
    for (i, t) in theta.iter().enumerate() {
        bend += t;
        let (s, c) = bend.sin_cos();
        p[0] += link * c * radial[0];
        p[1] += link * c * radial[1];
        p[2] += link * s;
        out[i] = p;
    }
    out
}

/// Intra-finger chain edges in both directions; no self loops.
pub fn ground_truth_graph(scene: &SceneConfig) -> Vec<u8> {
    chain_adjacency(scene.fingers.len())
}

pub(crate) fn chain_adjacency(fingers: usize) -> Vec<u8> {
    let n = fingers * NODES_PER_FINGER;
    let mut adj = vec![0u8; n * n];
    for f in 0..fingers {
        let base = f * NODES_PER_FINGER;
        for j in 0..NODES_PER_FINGER - 1 {
            let (a, b) = (base + j, base + j + 1);
            adj[a * n + b] = 1;
            adj[b * n + a] = 1;
        }
    }
    adj
}

/// Runs the scene and records keypoints, signals and the true graph.
pub fn simulate(scene: &SceneConfig, steps: usize, rate: f64) -> Result<Sample> {
    let dynamics = Dynamics::default();
    let trace = simulate_angles(scene, steps, rate, &dynamics)?;
    let fingers = scene.fingers.len();
    let nodes = fingers * NODES_PER_FINGER;
    let mut positions = vec![0f32; nodes * steps * 3];
    for (f, finger) in scene.fingers.iter().enumerate() {
        for (t, theta) in trace.angles[f].iter().enumerate() {
            let kp = finger_keypoints(finger.vertex, finger.link_length, theta);
            for (j, p) in kp.iter().enumerate() {
                let node = f * NODES_PER_FINGER + j;
                let o = (node * steps + t) * 3;
                for d in 0..3 {
                    positions[o + d] = p[d] as f32;
                }
            }
        }
    }
    let actuation = trace.actuation.iter().flatten().map(|&u| u as f32).collect();
    Ok(Sample {
        nodes,
        actuators: fingers,
        steps,
        positions,
        actuation,
        edges: ground_truth_graph(scene),
        permutation: (0..nodes as u32).collect(),
        meta: SampleMeta {
            config_id: 0,
            vertices: scene.vertices(),
            elasticity: scene.fingers[0].elasticity,
            family: scene.motions[0].family,
            seed: scene.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::{FingerConfig, MotionFamily, MotionSpec, SAMPLE_RATE, STEPS};
    use super::*;

    fn scene(vertices: &[usize], k: f64, motion: MotionSpec) -> SceneConfig {
        SceneConfig {
            fingers: vertices.iter().map(|&v| FingerConfig::new(v, k)).collect(),
            motions: vec![motion; vertices.len()],
            seed: 17,
        }
    }

    #[test]
    fn idle_hand_does_not_move() {
        let s = simulate(&scene(&[0, 3, 6, 9], 6.0, MotionSpec::idle()), STEPS, SAMPLE_RATE).unwrap();
        for n in 0..s.nodes {
            let p0 = s.position(n, 0);
            for t in 1..s.steps {
                let p = s.position(n, t);
                let drift = (0..3).map(|d| (p[d] - p0[d]).abs()).fold(0.0f32, f32::max);
                assert!((drift as f64) < 1e-9);
            }
        }
    }

    #[test]
    fn held_pull_settles_at_commanded_curl() {
        for k in [4.0, 6.0, 8.0, 10.0] {
            let sc = scene(&[1, 4, 7], k, MotionSpec::constant_full());
            let trace = simulate_angles(&sc, 8 * 60, SAMPLE_RATE, &Dynamics::default()).unwrap();
            let last = trace.angles[0].last().unwrap();
            for i in 0..3 {
                assert!((last[i] - sc.fingers[0].gains[i]).abs() < 1e-3, "k={k} joint {i}: {}", last[i]);
            }
        }
    }

    #[test]
    fn angles_stay_bounded_under_random_pull() {
        let mut rng = Rng::new(8);
        for fam in MotionFamily::TRAINING {
            for k in [4.0, 10.0] {
                let motion = MotionSpec::random(fam, 0.0, &mut rng);
                let sc = scene(&[0, 2, 5, 8], k, motion);
                let trace = simulate_angles(&sc, 400, SAMPLE_RATE, &Dynamics::default()).unwrap();
                let bound = 1.2 + 1.0;
                assert!(trace.angles.iter().flatten().flatten().all(|t| t.abs() <= bound));
            }
        }
    }

    #[test]
    fn positions_are_within_reach() {
        let s = simulate(&scene(&[0, 3, 6, 9], 4.0, MotionSpec::constant_full()), STEPS, SAMPLE_RATE).unwrap();
        let reach = (BASE_RADIUS + 3.0 * 0.25) as f32 + 1e-6;
        for p in s.positions.chunks(3) {
            assert!((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= reach);
        }
        // curled fingers actually leave the plane
        assert!(s.position(2, 99)[2] > 0.3);
    }

    #[test]
    fn deterministic() {
        let mut rng = Rng::new(2);
        let motion = MotionSpec::random(MotionFamily::X, 0.05, &mut rng);
        let sc = scene(&[0, 1, 2, 3], 8.0, motion);
        assert_eq!(simulate(&sc, STEPS, SAMPLE_RATE).unwrap(), simulate(&sc, STEPS, SAMPLE_RATE).unwrap());
    }

    #[test]
    fn unstable_parameters_are_reported() {
        let mut sc = scene(&[0, 3, 6], 4.0, MotionSpec::constant_full());
        let dynamics = Dynamics {
            dt: 0.5,
            ..Dynamics::default()
        };
        for f in &mut sc.fingers {
            f.elasticity = 400.0;
        }
        assert!(matches!(
            simulate_angles(&sc, 50, 2.0, &dynamics),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn graph_edge_counts() {
        let four = scene(&[0, 3, 6, 9], 4.0, MotionSpec::idle());
        let three = scene(&[0, 3, 6], 4.0, MotionSpec::idle());
        let g4 = ground_truth_graph(&four);
        let g3 = ground_truth_graph(&three);
        assert_eq!(g4.iter().filter(|&&e| e == 1).count(), 16);
        assert_eq!(g3.iter().filter(|&&e| e == 1).count(), 12);
        for n in 0..12 {
            assert_eq!(g4[n * 12 + n], 0);
            for m in 0..12 {
                assert_eq!(g4[n * 12 + m], g4[m * 12 + n]);
                if g4[n * 12 + m] == 1 {
                    assert_eq!(n / 3, m / 3, "no cross-finger edges");
                }
            }
        }
    }
}
