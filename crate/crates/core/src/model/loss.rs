use super::graph::edge_pairs;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::Sample;
use crate::tensor::{Tensor, Var};

/// Gaussian negative log-likelihood without its constant:
/// `Σ (pred − target)² / (2σ²)`.
pub fn gaussian_nll<'t, S: Scalar>(pred: Var<'t, S>, target: Var<'t, S>, sigma2: f64) -> Result<Var<'t, S>> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain {
            op: "gaussian_nll",
            detail: format!("variance {sigma2} must be positive"),
        });
    }
    let d = pred.sub(target)?;
    d.mul(d)?.sum_all()?.scale(S::of(0.5 / sigma2))
}

/// KL divergence from per-edge categoricals to the uniform prior, summed over
/// edges: `Σ_e Σ_k q_ek (log q_ek + log K)`. Takes `log q`, `[edges × K]`.
pub fn kl_uniform<'t, S: Scalar>(log_q: Var<'t, S>) -> Result<Var<'t, S>> {
    let k = *log_q.shape().last().ok_or_else(|| Error::InvalidShape {
        op: "kl_uniform",
        detail: "scalar input".into(),
    })?;
    let tape = log_q.tape();
    let shifted = log_q.add(tape.constant(Tensor::scalar(S::of((k as f64).ln()))))?;
    log_q.exp()?.mul(shifted)?.sum_all()
}

/// Evidence lower bound objective with a single sample: reconstruction
/// negative log-likelihood plus KL to the uniform edge prior.
pub fn elbo_loss<'t, S: Scalar>(pred: Var<'t, S>, target: Var<'t, S>, log_q: Var<'t, S>, sigma2: f64) -> Result<Var<'t, S>> {
    gaussian_nll(pred, target, sigma2)?.add(kl_uniform(log_q)?)
}

/// Mean cross-entropy of edge logits `[edges × K]` against integer labels.
pub fn edge_cross_entropy<'t, S: Scalar>(logits: Var<'t, S>, labels: &[usize]) -> Result<Var<'t, S>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::InvalidShape {
            op: "edge_cross_entropy",
            detail: format!("logits {shape:?} for {} labels", labels.len()),
        });
    }
    let k = shape[1];
    let mut one_hot = vec![S::zero(); labels.len() * k];
    for (e, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::Domain {
                op: "edge_cross_entropy",
                detail: format!("label {l} with {k} edge types"),
            });
        }
        one_hot[e * k + l] = S::one();
    }
    let target = logits.tape().constant(Tensor::new(shape, one_hot)?);
    logits
        .log_softmax()?
        .mul(target)?
        .sum_all()?
        .scale(S::of(-1.0 / labels.len() as f64))
}

/// Edge-type labels of a sample in [`edge_pairs`] order.
///
/// With two types, 1 marks a connected pair. With three, a connected pair is
/// 1 when the sender is the more proximal phalanx and 2 otherwise.
pub fn edge_labels(sample: &Sample, edge_types: usize) -> Result<Vec<usize>> {
    if edge_types < 2 {
        return Err(Error::config(format!("edge labels need at least 2 types, got {edge_types}")));
    }
    Ok(edge_pairs(sample.nodes)
        .into_iter()
        .map(|(i, j)| {
            if !sample.edge(i, j) {
                0
            } else if edge_types == 2 || sample.phalanx(i) < sample.phalanx(j) {
                1
            } else {
                2
            }
        })
        .collect())
}
