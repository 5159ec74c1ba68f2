use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shape of a cable-pull signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionFamily {
    /// Raised sine.
    A,
    /// Rectified sine.
    B,
    /// Two-tone sine.
    C,
    /// Rectified product of sine and cosine plus Gaussian noise; test only.
    X,
}

impl MotionFamily {
    pub const TRAINING: [MotionFamily; 3] = [MotionFamily::A, MotionFamily::B, MotionFamily::C];
}

impl fmt::Display for MotionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MotionFamily::A => "A",
            MotionFamily::B => "B",
            MotionFamily::C => "C",
            MotionFamily::X => "X",
        };
        f.write_str(s)
    }
}

impl FromStr for MotionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(MotionFamily::A),
            "B" | "b" => Ok(MotionFamily::B),
            "C" | "c" => Ok(MotionFamily::C),
            "X" | "x" => Ok(MotionFamily::X),
            other => Err(Error::config(format!("invalid motion family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub family: MotionFamily,
    pub amplitude: f64,
    /// Hz
    pub freq: f64,
    pub freq2: f64,
    pub phase: f64,
    pub phase2: f64,
    /// Standard deviation of additive noise, family X only.
    pub noise: f64,
}

impl MotionSpec {
    /// Draws amplitude in [0.4, 1], frequencies in [0.05, 0.3] Hz and phases in [0, 2π).
    pub fn random(family: MotionFamily, noise: f64, rng: &mut Rng) -> Self {
        MotionSpec {
            family,
            amplitude: rng.uniform_range(0.4, 1.0),
            freq: rng.uniform_range(0.05, 0.3),
            freq2: rng.uniform_range(0.05, 0.3),
            phase: rng.uniform_range(0.0, TAU),
            phase2: rng.uniform_range(0.0, TAU),
            noise: if family == MotionFamily::X { noise } else { 0.0 },
        }
    }

    /// Constant full pull: family A at its peak with zero frequency.
    pub fn constant_full() -> Self {
        MotionSpec {
            family: MotionFamily::A,
            amplitude: 1.0,
            freq: 0.0,
            freq2: 0.0,
            phase: PI / 2.0,
            phase2: 0.0,
            noise: 0.0,
        }
    }

    /// Zero pull.
    pub fn idle() -> Self {
        MotionSpec {
            amplitude: 0.0,
            ..Self::constant_full()
        }
    }
}

/// Cable-pull values at `steps` samples taken at `rate` Hz, clipped to [0, 1].
pub fn actuation_signal(spec: &MotionSpec, steps: usize, rate: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if steps == 0 || !(rate > 0.0) {
        return Err(Error::config(format!("invalid signal request: {steps} steps at {rate} Hz")));
    }
    let a = spec.amplitude;
    let out = (0..steps)
        .map(|k| {
            let t = k as f64 / rate;
            let s1 = (TAU * spec.freq * t + spec.phase).sin();
            let v = match spec.family {
                MotionFamily::A => a * (0.5 + 0.5 * s1),
                MotionFamily::B => a * s1.abs(),
                MotionFamily::C => {
                    let s2 = (TAU * spec.freq2 * t + spec.phase2).sin();
                    a * (0.5 + 0.25 * s1 + 0.25 * s2)
                }
                MotionFamily::X => {
                    let c2 = (TAU * spec.freq2 * t + spec.phase2).cos();
                    a * (s1 * c2).abs() + spec.noise * rng.normal()
                }
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(out)
}
