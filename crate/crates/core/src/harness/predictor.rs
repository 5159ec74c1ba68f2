use serde::{Deserialize, Serialize};

use super::data::NormStats;
use crate::baselines::{Baseline, BaselineConfig, BaselineKind};
use crate::error::{Error, Result};
use crate::model::{one_hot_argmax, DecoderKind, Episodes, Nri, NriConfig};
use crate::rng::Rng;
use crate::sim::Sample;
use crate::tensor::{ParamStore, Tape, Tensor};

/// How the encoder of a relational model is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supervision {
    /// Cross-entropy against ground-truth edge labels; the decoder sees the
    /// true graph during training.
    Supervised,
    /// Evidence lower bound with Gumbel-softmax edge samples.
    Unsupervised,
}

impl Supervision {
    pub fn prefix(self) -> &'static str {
        match self {
            Supervision::Supervised => "sup",
            Supervision::Unsupervised => "uns",
        }
    }
}

/// Architecture and hyperparameters of a predictor, as stored in `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Nri { config: NriConfig, supervision: Supervision },
    Baseline { config: BaselineConfig },
    /// Returns the recorded future; used to check the evaluation pipeline.
    Oracle,
}

impl ModelSpec {
    pub fn nri(decoder: DecoderKind, supervision: Supervision) -> Self {
        ModelSpec::Nri {
            config: NriConfig::new(decoder),
            supervision,
        }
    }

    /// Baseline sized for the four-finger training scenes.
    pub fn baseline(kind: BaselineKind) -> Self {
        ModelSpec::Baseline {
            config: BaselineConfig::new(kind, 12, 4),
        }
    }

    /// Report label such as `sup_nri_rnn` or `lstm`.
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Nri { config, supervision } => {
                format!("{}_nri_{}", supervision.prefix(), config.decoder.as_str())
            }
            ModelSpec::Baseline { config } => config.kind.as_str().to_string(),
            ModelSpec::Oracle => "oracle".to_string(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        match self {
            ModelSpec::Nri { .. } => true,
            ModelSpec::Baseline { config } => config.kind != BaselineKind::LastPosition,
            ModelSpec::Oracle => false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Network {
    Nri(Nri),
    Baseline(Baseline),
    Oracle,
}

/// A model together with its parameters and normalisation.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub spec: ModelSpec,
    pub net: Network,
    pub store: ParamStore<f32>,
    pub norm: NormStats,
}

/// Normalised predictions for a batch.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// The batch the prediction was made on.
    pub episodes: Episodes<f32>,
    /// One `[batch·nodes × 3]` block per predicted step.
    pub steps: Vec<Tensor<f32>>,
    /// Predicted edge type per sample in [`crate::model::edge_pairs`] order.
    pub edges: Option<Vec<Vec<usize>>>,
}

impl Predictor {
    /// Builds a freshly initialised predictor.
    pub fn new(spec: ModelSpec, norm: NormStats, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = match &spec {
            ModelSpec::Nri { config, .. } => Network::Nri(Nri::new(config.clone(), &mut store, rng)?),
            ModelSpec::Baseline { config } => Network::Baseline(Baseline::new(config.clone(), &mut store, rng)?),
            ModelSpec::Oracle => Network::Oracle,
        };
        Ok(Predictor { spec, net, store, norm })
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Builds the input batch this model expects for `samples`.
    pub fn episodes(&self, samples: &[&Sample]) -> Result<Episodes<f32>> {
        let own = samples.iter().map(|s| s.actuators).max().unwrap_or(0);
        match &self.net {
            Network::Nri(m) => self.norm.episodes(samples, m.config.actuators, None),
            Network::Baseline(b) => {
                let pad = (b.kind() == BaselineKind::Lstm).then_some(b.config.nodes);
                let actuators = if b.kind() == BaselineKind::LastPosition { own } else { b.config.actuators };
                self.norm.episodes(samples, actuators, pad)
            }
            Network::Oracle => self.norm.episodes(samples, own, None),
        }
    }

    /// Predicts steps `start+1 ..= start+horizon` for equally sized samples.
    pub fn predict(&self, samples: &[&Sample], start: usize, horizon: usize) -> Result<Prediction> {
        let episodes = self.episodes(samples)?;
        if start + horizon >= episodes.steps {
            return Err(Error::InvalidShape {
                op: "predict",
                detail: format!("horizon {horizon} from step {start} exceeds {} steps", episodes.steps),
            });
        }
        let tape = Tape::new();
        let (steps, edges) = match &self.net {
            Network::Nri(m) => {
                let layout = m.layout(&episodes);
                let logits = m.encode(&tape, &self.store, &episodes, &layout)?;
                let hard = one_hot_argmax(&logits.value());
                let labels = hard_labels(&hard, episodes.batch);
                let z = tape.constant(hard);
                let preds = m.rollout(&tape, &self.store, &episodes, z, &layout, start, horizon)?;
                (preds.iter().map(|v| v.value()).collect(), Some(labels))
            }
            Network::Baseline(b) => {
                let preds = b.rollout(&tape, &self.store, &episodes, start, horizon)?;
                (preds.iter().map(|v| v.value()).collect(), None)
            }
            Network::Oracle => ((start + 1..=start + horizon).map(|t| episodes.positions_at(t)).collect(), None),
        };
        Ok(Prediction { episodes, steps, edges })
    }

    /// Ground-truth edge labels in the model's edge-type convention, if it has one.
    pub fn edge_types(&self) -> Option<usize> {
        match &self.net {
            Network::Nri(m) => Some(m.config.edge_types),
            _ => None,
        }
    }
}

fn hard_labels(one_hot: &Tensor<f32>, batch: usize) -> Vec<Vec<usize>> {
    let k = one_hot.shape()[1];
    let rows = one_hot.shape()[0];
    let per = rows / batch.max(1);
    let labels: Vec<usize> = one_hot
        .data()
        .chunks(k)
        .map(|r| r.iter().position(|&v| v == 1.0).unwrap_or(0))
        .collect();
    labels.chunks(per).map(<[usize]>::to_vec).collect()
}
