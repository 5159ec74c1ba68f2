use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

/// Relaxed categorical sampling settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub tau: f64,
    /// Emit one-hot samples whose gradient is that of the relaxed sample.
    pub hard: bool,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig { tau: 0.5, hard: false }
    }
}

/// Standard Gumbel noise `−log(−log U)` with `U` uniform on the open interval.
pub fn gumbel_noise<S: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(-(-rng.uniform_open().ln()).ln())).collect();
    Tensor::new(shape.to_vec(), data).expect("sized from shape")
}

/// `softmax((logits + noise) / τ)` over the last axis, optionally hardened.
pub fn gumbel_softmax_with_noise<'t, S: Scalar>(
    logits: Var<'t, S>,
    noise: Tensor<S>,
    cfg: &GumbelConfig,
) -> Result<Var<'t, S>> {
    if !(cfg.tau > 0.0) {
        return Err(Error::Domain {
            op: "gumbel_softmax",
            detail: format!("temperature {} must be positive", cfg.tau),
        });
    }
    let tape = logits.tape();
    let soft = logits
        .add(tape.constant(noise))?
        .scale(S::of(1.0 / cfg.tau))?
        .softmax()?;
    if !cfg.hard {
        return Ok(soft);
    }
    let value = soft.value();
    let hard = one_hot_argmax(&value);
    // hard + (soft − stop_gradient(soft))
    soft.sub(tape.constant(value))?.add(tape.constant(hard))
}

/// Draws a relaxed sample with fresh Gumbel noise.
pub fn gumbel_softmax<'t, S: Scalar>(logits: Var<'t, S>, cfg: &GumbelConfig, rng: &mut Rng) -> Result<Var<'t, S>> {
    let noise = gumbel_noise(&logits.shape(), rng);
    gumbel_softmax_with_noise(logits, noise, cfg)
}

/// Row-wise one-hot encoding of the argmax over the last axis. Ties resolve
/// to the lowest index.
pub fn one_hot_argmax<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let k = *t.shape().last().expect("non-scalar");
    let mut out = vec![S::zero(); t.len()];
    for (row, chunk) in t.data().chunks(k).enumerate() {
        out[row * k + argmax(chunk)] = S::one();
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn zero_noise_symmetry_and_sharpness() {
        let tape = Tape::<f64>::new();
        let cfg = GumbelConfig { tau: 0.7, hard: false };
        let l = tape.constant(Tensor::new(vec![1, 2], vec![1.3, 1.3]).unwrap());
        let z = gumbel_softmax_with_noise(l, Tensor::zeros(vec![1, 2]), &cfg).unwrap();
        assert_eq!(z.value().data(), &[0.5, 0.5]);

        let cold = GumbelConfig { tau: 0.01, hard: false };
        let l = tape.constant(Tensor::new(vec![1, 2], vec![2.0, 0.0]).unwrap());
        let z = gumbel_softmax_with_noise(l, Tensor::zeros(vec![1, 2]), &cold).unwrap();
        assert!(z.value().data()[0] > 0.999);
    }

    #[test]
    fn hard_sample_is_one_hot_with_soft_gradient() {
        let tape = Tape::<f64>::new();
        let l = tape.var(Tensor::new(vec![2, 3], vec![0.1, 0.9, -0.3, 1.0, 0.2, 0.0]).unwrap());
        let noise = Tensor::new(vec![2, 3], vec![0.0, 0.1, 0.2, -0.1, 0.3, 0.0]).unwrap();
        let hard = gumbel_softmax_with_noise(l, noise.clone(), &GumbelConfig { tau: 0.5, hard: true }).unwrap();
        assert_eq!(hard.value().data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let w = tape.constant(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 0.3, 0.0, 1.0]).unwrap());
        let g_hard = tape.backward(hard.mul(w).unwrap().sum_all().unwrap()).unwrap().wrt(l);

        let tape = Tape::<f64>::new();
        let l2 = tape.var(l.value());
        let soft = gumbel_softmax_with_noise(l2, noise, &GumbelConfig { tau: 0.5, hard: false }).unwrap();
        let w = tape.constant(w.value());
        let g_soft = tape.backward(soft.mul(w).unwrap().sum_all().unwrap()).unwrap().wrt(l2);
        assert!(g_hard.max_abs_diff(&g_soft) < 1e-12);
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let tape = Tape::<f32>::new();
        let l = tape.constant(Tensor::zeros(vec![1, 2]));
        let cfg = GumbelConfig { tau: 0.0, hard: false };
        assert!(gumbel_softmax_with_noise(l, Tensor::zeros(vec![1, 2]), &cfg).is_err());
    }
}
