use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{positional_encoding, Conv1d, EncoderLayer, Linear, Mode};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

pub(crate) trait Network {
    fn param_count(&self) -> usize;
    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()>;
    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var>;
}

/// Nonlinearity between hidden convolutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    LeakyRelu,
    Relu,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Same-length convolutions through a channel schedule on `[B, C, L]`.
/// With `linear_tail` the last layer has no activation.
pub(crate) struct ConvStack {
    pub convs: Vec<Conv1d>,
    pub act: Activation,
    pub linear_tail: bool,
}

impl ConvStack {
    pub fn new(prefix: &str, channels: &[usize], kernel: usize, act: Activation, linear_tail: bool) -> Self {
        let convs = channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| Conv1d::new(format!("{prefix}.{i}"), w[0], w[1], kernel))
            .collect();
        Self {
            convs,
            act,
            linear_tail,
        }
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv1d::param_count).sum()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.convs.iter().try_for_each(|c| c.init(params, rng))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, mut x: Var) -> Result<Var> {
        let n = self.convs.len();
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(tape, p, x)?;
            if !(self.linear_tail && i + 1 == n) {
                x = self.act.apply(tape, x);
            }
        }
        Ok(x)
    }
}

/// Pointwise projection to the model dimension, positional encoding and a
/// stack of encoder layers; `[B, L, in] -> [B, L, d]`.
pub(crate) struct EncoderTrunk {
    pub embed: Linear,
    pub layers: Vec<EncoderLayer>,
    pub length: usize,
}

impl EncoderTrunk {
    pub fn new(
        prefix: &str,
        input: usize,
        length: usize,
        d_model: usize,
        heads: usize,
        layers: usize,
        d_ff: usize,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| EncoderLayer::new(&format!("{prefix}.enc{i}"), d_model, heads, d_ff))
            .collect::<Result<_>>()?;
        Ok(Self {
            embed: Linear::new(format!("{prefix}.embed"), input, d_model),
            layers,
            length,
        })
    }

    pub fn param_count(&self) -> usize {
        self.embed.param_count() + self.layers.iter().map(EncoderLayer::param_count).sum::<usize>()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.embed.init(params, rng)?;
        self.layers.iter().try_for_each(|l| l.init(params, rng))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.embed.forward(tape, p, x)?;
        let pe = tape.constant(positional_encoding(self.length, self.embed.out_features));
        let mut h = tape.add(h, pe)?;
        for layer in &self.layers {
            h = layer.forward(tape, p, h)?;
        }
        Ok(h)
    }
}
