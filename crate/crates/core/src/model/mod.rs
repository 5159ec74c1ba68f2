//! Action-conditioned neural relational inference.
//!
//! An [`Encoder`] reads a window of node trajectories and actuations and
//! produces logits over edge types for every ordered node pair. Edges are
//! sampled with a Gumbel-softmax relaxation and condition a [`Decoder`] that
//! rolls node positions forward, receiving the recorded future actuation at
//! every step.

mod decoder;
mod encoder;
mod features;
mod graph;
mod gumbel;
mod loss;
mod mlp;

pub use decoder::{Decoder, DecoderKind, GruCell, Hidden};
pub use encoder::Encoder;
pub use features::{feature_width, Episodes};
pub use graph::{edge_index, edge_pairs, GraphLayout};
pub use gumbel::{argmax, gumbel_noise, gumbel_softmax, gumbel_softmax_with_noise, one_hot_argmax, GumbelConfig};
pub use loss::{edge_cross_entropy, edge_labels, elbo_loss, gaussian_nll, kl_uniform};
pub use mlp::{aggregate_to_receivers, Linear, Mlp, OutputActivation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tape, Var};

/// Hyperparameters of an [`Nri`] model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NriConfig {
    pub decoder: DecoderKind,
    /// Number of edge types K.
    pub edge_types: usize,
    pub hidden: usize,
    pub rnn_hidden: usize,
    /// Fixed output variance of the Gaussian likelihood.
    pub sigma2: f64,
    pub gumbel: GumbelConfig,
    /// Actuation channels every node sees; shorter inputs are zero padded.
    pub actuators: usize,
    /// Length of the encoder window, starting at step 0.
    pub encoder_steps: usize,
    /// Recorded steps fed to the decoder before the first prediction.
    pub burn_in: usize,
    /// Edge type 0 carries no message.
    pub skip_null_edge: bool,
}

impl NriConfig {
    pub fn new(decoder: DecoderKind) -> Self {
        NriConfig {
            decoder,
            edge_types: 2,
            hidden: 64,
            rnn_hidden: 64,
            sigma2: 5e-5,
            gumbel: GumbelConfig::default(),
            actuators: 4,
            encoder_steps: 50,
            burn_in: match decoder {
                DecoderKind::Mlp => 1,
                DecoderKind::Rnn => 5,
            },
            skip_null_edge: false,
        }
    }

    pub fn feature_width(&self) -> usize {
        feature_width(self.actuators)
    }

    pub fn validate(&self) -> Result<()> {
        let problem = if self.edge_types < 1 {
            Some("edge_types must be at least 1")
        } else if self.skip_null_edge && self.edge_types < 2 {
            Some("skip_null_edge needs at least 2 edge types")
        } else if self.hidden == 0 || self.rnn_hidden == 0 {
            Some("hidden widths must be positive")
        } else if !(self.sigma2 > 0.0) {
            Some("sigma2 must be positive")
        } else if !(self.gumbel.tau > 0.0) {
            Some("gumbel temperature must be positive")
        } else if self.encoder_steps == 0 || self.burn_in == 0 {
            Some("encoder_steps and burn_in must be positive")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::config(p)),
            None => Ok(()),
        }
    }
}

/// Encoder and decoder sharing one parameter store.
#[derive(Clone, Debug)]
pub struct Nri {
    pub config: NriConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Nri {
    pub fn new<S: Scalar>(config: NriConfig, store: &mut ParamStore<S>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let dx = config.feature_width();
        let encoder = Encoder::new(store, config.encoder_steps * dx, config.hidden, config.edge_types, rng);
        let decoder = Decoder::new(
            store,
            config.decoder,
            dx,
            config.hidden,
            config.rnn_hidden,
            config.edge_types,
            config.skip_null_edge,
            rng,
        );
        Ok(Nri {
            config,
            encoder,
            decoder,
        })
    }

    pub fn layout<S>(&self, episodes: &Episodes<S>) -> GraphLayout {
        GraphLayout::new(episodes.batch, episodes.nodes)
    }

    /// Edge-type logits `[batch·edges × K]` from the encoder window.
    pub fn encode<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        episodes: &Episodes<S>,
        layout: &GraphLayout,
    ) -> Result<Var<'t, S>> {
        if episodes.actuators != self.config.actuators {
            return Err(Error::WidthMismatch {
                expected: self.config.feature_width(),
                actual: episodes.feature_width(),
            });
        }
        let window = tape.constant(episodes.window(0..self.config.encoder_steps)?);
        self.encoder.forward(tape, store, window, layout)
    }

    /// Decoder rollout from `start` with the configured burn-in.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        episodes: &Episodes<S>,
        edges: Var<'t, S>,
        layout: &GraphLayout,
        start: usize,
        horizon: usize,
    ) -> Result<Vec<Var<'t, S>>> {
        self.decoder
            .rollout(tape, store, episodes, edges, layout, start, self.config.burn_in, horizon)
    }
}
