use serde::{Deserialize, Serialize};

use super::data::NormStats;
use super::predictor::{ModelSpec, Network, Predictor, Supervision};
use crate::error::{Error, Result};
use crate::model::{edge_cross_entropy, edge_labels, gaussian_nll, gumbel_softmax, kl_uniform, Episodes};
use crate::rng::Rng;
use crate::sim::Sample;
use crate::tensor::{Adam, AdamConfig, Tape, Tensor, Var};

/// Likelihood variance used to scale the baseline objectives.
pub const BASELINE_SIGMA2: f64 = 5e-5;

/// Optimisation settings shared by every trainable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Autoregressive steps per training window.
    pub prediction_steps: usize,
    /// Earliest step a training window may start from.
    pub min_start: usize,
    /// Train on a seeded random subset of this size.
    pub max_samples: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            prediction_steps: 10,
            min_start: 54,
            max_samples: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub predictor: Predictor,
    /// Mean batch loss before training followed by one entry per epoch.
    pub losses: Vec<f64>,
}

/// Trains a freshly initialised model on `samples`.
pub fn train(spec: ModelSpec, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let norm = NormStats::from_samples(samples)?;
    let predictor = Predictor::new(spec, norm, &mut Rng::derived(cfg.seed, &[1]))?;
    train_predictor(predictor, samples, cfg)
}

/// Continues training `predictor`, keeping its normalisation statistics.
pub fn train_predictor(mut predictor: Predictor, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::config("learning_rate must be positive"));
    }
    if !predictor.spec.is_trainable() || cfg.epochs == 0 {
        return Ok(TrainOutcome {
            predictor,
            losses: Vec::new(),
        });
    }
    let steps = samples
        .first()
        .ok_or_else(|| Error::config("training set is empty"))?
        .steps;
    if cfg.prediction_steps == 0 || cfg.min_start + cfg.prediction_steps >= steps {
        return Err(Error::config(format!(
            "prediction window {}+{} does not fit in {steps} steps",
            cfg.min_start, cfg.prediction_steps
        )));
    }

    let mut rng = Rng::derived(cfg.seed, &[2]);
    let mut chosen: Vec<&Sample> = samples.iter().collect();
    if let Some(n) = cfg.max_samples {
        rng.shuffle(&mut chosen);
        chosen.truncate(n.max(1));
    }

    let mut adam = Adam::new(AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut probe_rng = Rng::derived(cfg.seed, &[3]);
    let initial = batches(&chosen, cfg.batch_size, &mut probe_rng)
        .iter()
        .map(|b| {
            let tape = Tape::new();
            let loss = batch_loss(&predictor, &tape, b, cfg, &mut probe_rng)?;
            Ok(loss.item() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    losses.push(mean(&initial));

    for epoch in 1..=cfg.epochs {
        let mut epoch_losses = Vec::new();
        for batch in batches(&chosen, cfg.batch_size, &mut rng) {
            let tape = Tape::new();
            let loss = batch_loss(&predictor, &tape, &batch, cfg, &mut rng)?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            let grads = tape.backward(loss)?;
            predictor.store.zero_grads();
            predictor.store.accumulate(&grads);
            if !predictor.store.grads_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: f64::NAN });
            }
            adam.step(&mut predictor.store)?;
            epoch_losses.push(value);
        }
        losses.push(mean(&epoch_losses));
    }
    Ok(TrainOutcome { predictor, losses })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Shuffled minibatches whose members share a node count.
fn batches<'a>(samples: &[&'a Sample], size: usize, rng: &mut Rng) -> Vec<Vec<&'a Sample>> {
    let mut order: Vec<&Sample> = samples.to_vec();
    rng.shuffle(&mut order);
    let mut sizes: Vec<usize> = order.iter().map(|s| s.nodes).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();
    for n in sizes {
        let group: Vec<&Sample> = order.iter().copied().filter(|s| s.nodes == n).collect();
        out.extend(group.chunks(size).map(<[&Sample]>::to_vec));
    }
    out
}

/// Training objective of one minibatch, averaged over its samples.
pub fn batch_loss<'t>(
    predictor: &Predictor,
    tape: &'t Tape<f32>,
    samples: &[&Sample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Var<'t, f32>> {
    let episodes = predictor.episodes(samples)?;
    let ps = cfg.prediction_steps;
    let latest = episodes.steps - 1 - ps;
    let start = cfg.min_start + rng.below(latest - cfg.min_start + 1);
    let batch = samples.len() as f32;
    let target = |e: &Episodes<f32>| -> Result<Var<'t, f32>> {
        let rows = e.rows();
        Ok(tape.constant(e.positions_range(start + 1..start + 1 + ps).reshape(vec![ps * rows, 3])?))
    };
    match (&predictor.net, &predictor.spec) {
        (Network::Nri(model), ModelSpec::Nri { supervision, .. }) => {
            let layout = model.layout(&episodes);
            let logits = model.encode(tape, &predictor.store, &episodes, &layout)?;
            let k = model.config.edge_types;
            let sigma2 = model.config.sigma2;
            let (z, edge_term) = match supervision {
                Supervision::Supervised => {
                    let mut labels = Vec::new();
                    for s in samples {
                        labels.extend(edge_labels(s, k)?);
                    }
                    let mut hot = vec![0.0f32; labels.len() * k];
                    for (e, &l) in labels.iter().enumerate() {
                        hot[e * k + l] = 1.0;
                    }
                    let z = tape.constant(Tensor::new(vec![labels.len(), k], hot)?);
                    (z, edge_cross_entropy(logits, &labels)?)
                }
                Supervision::Unsupervised => {
                    let z = gumbel_softmax(logits, &model.config.gumbel, rng)?;
                    (z, kl_uniform(logits.log_softmax()?)?.scale(1.0 / batch)?)
                }
            };
            let preds = model.rollout(tape, &predictor.store, &episodes, z, &layout, start, ps)?;
            let recon = gaussian_nll(tape.concat(&preds, 0)?, target(&episodes)?, sigma2)?.scale(1.0 / batch)?;
            recon.add(edge_term)
        }
        (Network::Baseline(model), _) => {
            let preds = model.rollout(tape, &predictor.store, &episodes, start, ps)?;
            gaussian_nll(tape.concat(&preds, 0)?, target(&episodes)?, BASELINE_SIGMA2)?.scale(1.0 / batch)
        }
        _ => Err(Error::config(format!("{} has no trainable parameters", predictor.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ModelKind, ModelSettings};
    use crate::sim::{generate_splits_with, GenerateOptions};

    fn trainset() -> Vec<Sample> {
        let mut splits = generate_splits_with(&GenerateOptions {
            master_seed: 4,
            draws_per_cell: 1,
            test_samples: 2,
            ..GenerateOptions::default()
        })
        .unwrap();
        splits.swap_remove(0).samples
    }

    fn linear() -> ModelSpec {
        ModelKind::Linear.spec(&ModelSettings::default())
    }

    #[test]
    fn linear_baseline_loss_falls() {
        let samples = trainset();
        let cfg = TrainConfig {
            epochs: 3,
            max_samples: Some(40),
            ..TrainConfig::default()
        };
        let out = train(linear(), &samples, &cfg).unwrap();
        assert_eq!(out.losses.len(), 4);
        assert!(out.losses[3] < out.losses[0], "{:?}", out.losses);
        let again = train(linear(), &samples, &cfg).unwrap();
        assert_eq!(out.losses, again.losses);
    }

    #[test]
    fn zero_epochs_and_untrainable_models_return_immediately() {
        let samples = trainset();
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(linear(), &samples, &zero).unwrap().losses.is_empty());
        let spec = ModelKind::LastPosition.spec(&ModelSettings::default());
        assert!(train(spec, &samples, &TrainConfig::default()).unwrap().losses.is_empty());
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let samples = trainset();
        let bad = [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                prediction_steps: 60,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(train(linear(), &samples, &cfg).is_err());
        }
        assert!(train(linear(), &[], &TrainConfig::default()).is_err());
    }
}
