use crate::error::Result;
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

use super::{Linear, MultiHeadAttention};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Sinusoidal position signal: even columns `sin(pos / 10000^(2i/d))`, odd
/// columns the matching cosine. Panics when `len` or `d` is zero.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    assert!(len >= 1 && d >= 1, "positional encoding needs len, d >= 1");
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for j in 0..d {
            let i2 = (j - j % 2) as f64;
            let angle = pos as f64 / 10000f64.powf(i2 / d as f64);
            data[pos * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[len, d], data).expect("len * d entries")
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.dim
    }

    pub fn init(&self, params: &mut ParamSet) -> Result<()> {
        params.insert(format!("{}.gain", self.name), Tensor::ones(&[self.dim]))?;
        params.insert(format!("{}.bias", self.name), Tensor::zeros(&[self.dim]))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let gain = p.get(&format!("{}.gain", self.name))?;
        let bias = p.get(&format!("{}.bias", self.name))?;
        tape.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

/// `linear(d → d_ff) → relu → linear(d_ff → d)`
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward {
    pub expand: Linear,
    pub contract: Linear,
}

impl FeedForward {
    pub fn new(name: &str, d_model: usize, d_ff: usize) -> Self {
        Self {
            expand: Linear::new(format!("{name}.expand"), d_model, d_ff),
            contract: Linear::new(format!("{name}.contract"), d_ff, d_model),
        }
    }

    pub fn param_count(&self) -> usize {
        self.expand.param_count() + self.contract.param_count()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.expand.init(params, rng)?;
        self.contract.init(params, rng)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.expand.forward(tape, p, x)?;
        let h = tape.relu(h);
        self.contract.forward(tape, p, h)
    }
}

/// Post-norm encoder block:
/// `x ← norm(x + attention(x))`, then `x ← norm(x + feed_forward(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub feed_forward: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(name: &str, d_model: usize, heads: usize, d_ff: usize) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(format!("{name}.attn"), d_model, heads)?,
            norm1: LayerNorm::new(format!("{name}.norm1"), d_model),
            feed_forward: FeedForward::new(&format!("{name}.ff"), d_model, d_ff),
            norm2: LayerNorm::new(format!("{name}.norm2"), d_model),
        })
    }

    pub fn param_count(&self) -> usize {
        self.attention.param_count()
            + self.norm1.param_count()
            + self.feed_forward.param_count()
            + self.norm2.param_count()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.attention.init(params, rng)?;
        self.norm1.init(params)?;
        self.feed_forward.init(params, rng)?;
        self.norm2.init(params)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let a = self.attention.forward(tape, p, x)?;
        let x = tape.add(x, a)?;
        let x = self.norm1.forward(tape, p, x)?;
        let f = self.feed_forward.forward(tape, p, x)?;
        let x = tape.add(x, f)?;
        self.norm2.forward(tape, p, x)
    }
}
