//! Learning the connectivity and action-conditioned dynamics of a
//! cable-driven soft hand with graph neural networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors, reverse-mode autodiff, Adam, gradient checks;
//! * [`sim`]: a deterministic soft-finger simulator and the dataset splits;
//! * [`model`]: relational-inference encoder, Gumbel-softmax edge sampler,
//!   and MLP / recurrent graph decoders;
//! * [`baselines`]: last-position, linear, MLP and LSTM predictors;
//! * [`harness`]: normalisation, training, metrics and experiment matrices.
//!
//! Numeric code is generic over [`Scalar`]; training runs in `f32` and
//! gradient verification in `f64`. The aliases below name the two modes.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{Adam, AdamConfig, Gradients, ParamId, ParamStore, Tape, Tensor, Var};

/// Training-mode tensor.
pub type Tensor32 = Tensor<f32>;
/// Verification-mode tensor.
pub type Tensor64 = Tensor<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
