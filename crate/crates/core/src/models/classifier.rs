use serde::{Deserialize, Serialize};

use super::blocks::{Activation, ConvStack, EncoderTrunk, Network};
use super::tgan::pooled_head;
use super::Dims;
use crate::error::{Error, Result};
use crate::nn::{dropout, Linear, Lstm, Mode};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

/// DeepConvLSTM-style classifier: ReLU convolutions, LSTM, dense head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLstmConfig {
    pub dims: Dims,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
}

impl ConvLstmConfig {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            conv_channels: vec![32, 32],
            kernel_size: 5,
            lstm_hidden: 32,
            lstm_layers: 2,
            dropout: 0.3,
        }
    }

    pub fn tiny(dims: Dims) -> Self {
        Self {
            dims,
            conv_channels: vec![3],
            kernel_size: 3,
            lstm_hidden: 4,
            lstm_layers: 1,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("conv_lstm: {m}")));
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels needs at least one positive width");
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size must be odd to keep the window length");
        }
        if self.lstm_hidden == 0 || self.lstm_layers == 0 {
            return bad("LSTM sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Transformer classifier: the TGAN discriminator shape with N outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerClassifierConfig {
    pub dims: Dims,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl TransformerClassifierConfig {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            d_model: 32,
            heads: 4,
            layers: 2,
            d_ff: 64,
            dropout: 0.1,
        }
    }

    pub fn tiny(dims: Dims) -> Self {
        Self {
            dims,
            d_model: 8,
            heads: 2,
            layers: 1,
            d_ff: 8,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.d_model < 2 || self.heads == 0 || self.d_model % self.heads != 0 || self.d_ff == 0 {
            return Err(Error::Config(format!(
                "transformer_classifier: d_model {} must be >= 2 and divisible by {} heads, d_ff positive",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("transformer_classifier: dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

pub(crate) struct ConvLstm {
    convs: ConvStack,
    lstm: Lstm,
    head: Linear,
    dropout: f64,
}

pub(crate) fn conv_lstm(c: &ConvLstmConfig) -> ConvLstm {
    let channels: Vec<usize> = std::iter::once(c.dims.channels)
        .chain(c.conv_channels.iter().copied())
        .collect();
    let width = *channels.last().expect("non-empty");
    ConvLstm {
        convs: ConvStack::new("cls.conv", &channels, c.kernel_size, Activation::Relu, false),
        lstm: Lstm::new("cls.lstm", width, c.lstm_hidden, c.lstm_layers),
        head: Linear::new("cls.head", c.lstm_hidden, c.dims.classes),
        dropout: c.dropout,
    }
}

impl Network for ConvLstm {
    fn param_count(&self) -> usize {
        self.convs.param_count() + self.lstm.param_count() + self.head.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.convs.init(params, rng)?;
        self.lstm.init(params, rng)?;
        self.head.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let h = self.convs.forward(tape, p, x)?;
        let h = tape.transpose(h)?;
        let h = self.lstm.forward(tape, p, h)?.final_hidden;
        let h = dropout(tape, h, self.dropout, mode, rng)?;
        self.head.forward(tape, p, h)
    }
}

pub(crate) struct Transformer {
    trunk: EncoderTrunk,
    head: Linear,
    dropout: f64,
}

pub(crate) fn transformer(c: &TransformerClassifierConfig) -> Result<Transformer> {
    Ok(Transformer {
        trunk: EncoderTrunk::new(
            "cls",
            c.dims.channels,
            c.dims.length,
            c.d_model,
            c.heads,
            c.layers,
            c.d_ff,
        )?,
        head: Linear::new("cls.head", c.d_model, c.dims.classes),
        dropout: c.dropout,
    })
}

impl Network for Transformer {
    fn param_count(&self) -> usize {
        self.trunk.param_count() + self.head.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.trunk.init(params, rng)?;
        self.head.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        pooled_head(tape, p, x, &self.trunk, &self.head, self.dropout, mode, rng)
    }
}
