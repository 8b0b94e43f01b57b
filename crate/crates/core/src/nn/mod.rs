//! Differentiable building blocks for the generators, discriminators and
//! classifiers.
//!
//! Layers own their hyperparameters and a name prefix; their tensors live in
//! a [`ParamSet`](crate::params::ParamSet) and are looked up by
//! `"{prefix}.{field}"` on every forward pass.

mod attention;
mod conv;
mod dropout;
mod encoder;
mod linear;
pub mod loss;
mod lstm;

pub use attention::{attention, attention_with_weights, MultiHeadAttention};
pub use conv::Conv1d;
pub use dropout::dropout;
pub use encoder::{positional_encoding, EncoderLayer, FeedForward, LayerNorm, LAYER_NORM_EPS};
pub use linear::Linear;
pub use lstm::{Lstm, LstmOutput};

use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
pub(crate) fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}
