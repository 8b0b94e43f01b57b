use serde::{Deserialize, Serialize};

use super::blocks::{Activation, ConvStack, Network};
use super::Dims;
use crate::error::{Error, Result};
use crate::nn::{dropout, Linear, Lstm, Mode};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

/// Recurrent GAN hyperparameters.
///
/// `channel_schedule` starts at the window channel count and lists the
/// widths of the expanding convolutions in front of the LSTMs; the
/// generator's output convolutions walk the same schedule back down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RganConfig {
    pub dims: Dims,
    pub noise_len: usize,
    pub channel_schedule: Vec<usize>,
    pub kernel_size: usize,
    pub generator_lstm_layers: usize,
    pub discriminator_hidden: usize,
    pub discriminator_lstm_layers: usize,
    pub dropout: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl RganConfig {
    /// Channels double per stage, twice.
    pub fn new(dims: Dims) -> Self {
        let c = dims.channels;
        Self {
            dims,
            noise_len: dims.length,
            channel_schedule: vec![c, 2 * c, 4 * c],
            kernel_size: 5,
            generator_lstm_layers: 2,
            discriminator_hidden: 4 * c,
            discriminator_lstm_layers: 1,
            dropout: 0.2,
            activation: Activation::Tanh,
        }
    }

    /// Smallest meaningful network, for gradient checks and quick runs.
    pub fn tiny(dims: Dims) -> Self {
        let c = dims.channels;
        Self {
            dims,
            noise_len: 4,
            channel_schedule: vec![c, c + 2],
            kernel_size: 3,
            generator_lstm_layers: 1,
            discriminator_hidden: 4,
            discriminator_lstm_layers: 1,
            dropout: 0.0,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("rgan: {m}")));
        if self.noise_len == 0 {
            return bad("noise_len must be at least 1");
        }
        if self.channel_schedule.len() < 2 || self.channel_schedule.contains(&0) {
            return bad("channel_schedule needs at least two positive widths");
        }
        if self.channel_schedule[0] != self.dims.channels {
            return bad("channel_schedule must start at the window channel count");
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size must be odd to keep the window length");
        }
        if self.generator_lstm_layers == 0 || self.discriminator_lstm_layers == 0 || self.discriminator_hidden == 0 {
            return bad("LSTM sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    fn lstm_width(&self) -> usize {
        *self.channel_schedule.last().expect("validated schedule")
    }
}

/// Noise -> length-L seed signal -> expanding convolutions -> LSTM ->
/// contracting convolutions with a linear output.
pub(crate) struct Generator {
    dims: Dims,
    seed: Linear,
    expand: ConvStack,
    lstm: Lstm,
    contract: ConvStack,
}

pub(crate) fn generator(c: &RganConfig) -> Generator {
    let width = c.lstm_width();
    let up: Vec<usize> = std::iter::once(1).chain(c.channel_schedule[1..].iter().copied()).collect();
    let down: Vec<usize> = c.channel_schedule.iter().rev().copied().collect();
    Generator {
        dims: c.dims,
        seed: Linear::new("gen.seed", c.noise_len, c.dims.length),
        expand: ConvStack::new("gen.expand", &up, c.kernel_size, c.activation, false),
        lstm: Lstm::new("gen.lstm", width, width, c.generator_lstm_layers),
        contract: ConvStack::new("gen.contract", &down, c.kernel_size, c.activation, true),
    }
}

impl Network for Generator {
    fn param_count(&self) -> usize {
        self.seed.param_count() + self.expand.param_count() + self.lstm.param_count() + self.contract.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.seed.init(params, rng)?;
        self.expand.init(params, rng)?;
        self.lstm.init(params, rng)?;
        self.contract.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, z: Var, _mode: Mode, _rng: &mut Rng) -> Result<Var> {
        let b = tape.shape(z)[0];
        let l = self.dims.length;
        let s = self.seed.forward(tape, p, z)?;
        let s = tape.reshape(s, &[b, 1, l])?;
        let h = self.expand.forward(tape, p, s)?;
        let h = tape.transpose(h)?;
        let h = self.lstm.forward(tape, p, h)?.outputs;
        let h = tape.transpose(h)?;
        self.contract.forward(tape, p, h)
    }
}

/// Expanding convolutions -> LSTM -> dropout on the final hidden state ->
/// pointwise head to one logit.
pub(crate) struct Discriminator {
    expand: ConvStack,
    lstm: Lstm,
    head: Linear,
    dropout: f64,
}

pub(crate) fn discriminator(c: &RganConfig) -> Discriminator {
    Discriminator {
        expand: ConvStack::new("disc.expand", &c.channel_schedule, c.kernel_size, c.activation, false),
        lstm: Lstm::new("disc.lstm", c.lstm_width(), c.discriminator_hidden, c.discriminator_lstm_layers),
        head: Linear::new("disc.head", c.discriminator_hidden, 1),
        dropout: c.dropout,
    }
}

impl Network for Discriminator {
    fn param_count(&self) -> usize {
        self.expand.param_count() + self.lstm.param_count() + self.head.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.expand.init(params, rng)?;
        self.lstm.init(params, rng)?;
        self.head.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let b = tape.shape(x)[0];
        let h = self.expand.forward(tape, p, x)?;
        let h = tape.transpose(h)?;
        let h = self.lstm.forward(tape, p, h)?.final_hidden;
        let h = dropout(tape, h, self.dropout, mode, rng)?;
        let logit = self.head.forward(tape, p, h)?;
        tape.reshape(logit, &[b])
    }
}
