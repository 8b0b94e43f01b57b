//! The GAN generators and discriminators and the two validation classifiers.
//!
//! Every network is described by a [`ModelSpec`] and owns nothing but its
//! configuration; trainable state lives in a [`ParamSet`]. Inputs are
//! batched: generators map noise `[B, noise_len]` to windows `[B, C, L]`,
//! discriminators map windows to logits `[B]`, classifiers map windows to
//! logits `[B, N]`.

mod blocks;
mod checkpoint;
mod classifier;
mod rgan;
mod tgan;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::params::{Bound, ParamSet};
use crate::rng::{standard_normal, Rng};
use crate::tensor::{Tape, Tensor, Var};

use blocks::Network;

pub use blocks::Activation;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use classifier::{ConvLstmConfig, TransformerClassifierConfig};
pub use rgan::RganConfig;
pub use tgan::TganConfig;

/// Window geometry and class count shared by every network of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub channels: usize,
    pub length: usize,
    pub classes: usize,
}

impl Dims {
    pub const PAMAP2: Dims = Dims {
        channels: 27,
        length: 100,
        classes: 7,
    };
    pub const RWHAR: Dims = Dims {
        channels: 6,
        length: 50,
        classes: 8,
    };

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.length == 0 || self.classes < 2 {
            return Err(Error::Config(format!("invalid dims {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
    Classifier,
}

/// Architecture plus hyperparameters of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    RganGenerator(RganConfig),
    RganDiscriminator(RganConfig),
    TganGenerator(TganConfig),
    TganDiscriminator(TganConfig),
    ConvLstm(ConvLstmConfig),
    TransformerClassifier(TransformerClassifierConfig),
}

impl ModelSpec {
    pub fn arch(&self) -> &'static str {
        match self {
            ModelSpec::RganGenerator(_) => "rgan_generator",
            ModelSpec::RganDiscriminator(_) => "rgan_discriminator",
            ModelSpec::TganGenerator(_) => "tgan_generator",
            ModelSpec::TganDiscriminator(_) => "tgan_discriminator",
            ModelSpec::ConvLstm(_) => "conv_lstm",
            ModelSpec::TransformerClassifier(_) => "transformer_classifier",
        }
    }

    pub fn role(&self) -> Role {
        match self {
            ModelSpec::RganGenerator(_) | ModelSpec::TganGenerator(_) => Role::Generator,
            ModelSpec::RganDiscriminator(_) | ModelSpec::TganDiscriminator(_) => Role::Discriminator,
            ModelSpec::ConvLstm(_) | ModelSpec::TransformerClassifier(_) => Role::Classifier,
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            ModelSpec::RganGenerator(c) | ModelSpec::RganDiscriminator(c) => c.dims,
            ModelSpec::TganGenerator(c) | ModelSpec::TganDiscriminator(c) => c.dims,
            ModelSpec::ConvLstm(c) => c.dims,
            ModelSpec::TransformerClassifier(c) => c.dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::RganGenerator(c) | ModelSpec::RganDiscriminator(c) => c.validate(),
            ModelSpec::TganGenerator(c) | ModelSpec::TganDiscriminator(c) => c.validate(),
            ModelSpec::ConvLstm(c) => c.validate(),
            ModelSpec::TransformerClassifier(c) => c.validate(),
        }
    }

    /// Per-sample input shape (without the batch axis).
    pub fn input_shape(&self) -> Vec<usize> {
        let d = self.dims();
        match self {
            ModelSpec::RganGenerator(c) => vec![c.noise_len],
            ModelSpec::TganGenerator(c) => vec![c.noise_len],
            _ => vec![d.channels, d.length],
        }
    }

    /// Per-sample output shape (without the batch axis).
    pub fn output_shape(&self) -> Vec<usize> {
        let d = self.dims();
        match self.role() {
            Role::Generator => vec![d.channels, d.length],
            Role::Discriminator => vec![],
            Role::Classifier => vec![d.classes],
        }
    }

    fn network(&self) -> Result<Box<dyn Network>> {
        self.validate()?;
        Ok(match self {
            ModelSpec::RganGenerator(c) => Box::new(rgan::generator(c)),
            ModelSpec::RganDiscriminator(c) => Box::new(rgan::discriminator(c)),
            ModelSpec::TganGenerator(c) => Box::new(tgan::generator(c)?),
            ModelSpec::TganDiscriminator(c) => Box::new(tgan::discriminator(c)?),
            ModelSpec::ConvLstm(c) => Box::new(classifier::conv_lstm(c)),
            ModelSpec::TransformerClassifier(c) => Box::new(classifier::transformer(c)?),
        })
    }

    /// Parameter count from per-block closed forms, without allocating.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self.network()?.param_count())
    }

    pub fn init(&self, rng: &mut Rng) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        self.network()?.init(&mut params, rng)?;
        Ok(params)
    }

    /// Records one batched forward pass. `rng` only feeds dropout in
    /// [`Mode::Train`].
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let mut expected = self.input_shape();
        let batch = match tape.shape(x).first() {
            Some(&b) if tape.shape(x).len() == expected.len() + 1 => b,
            _ => 0,
        };
        expected.insert(0, batch);
        if batch == 0 || tape.shape(x) != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                op: self.arch(),
                lhs: tape.shape(x).to_vec(),
                rhs: expected,
            });
        }
        self.network()?.forward(tape, p, x, mode, rng)
    }

    /// `[batch, noise_len]` standard normal noise for a generator.
    pub fn sample_noise(&self, batch: usize, rng: &mut Rng) -> Result<Tensor> {
        let noise_len = match self {
            ModelSpec::RganGenerator(c) => c.noise_len,
            ModelSpec::TganGenerator(c) => c.noise_len,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{} does not take noise",
                    self.arch()
                )))
            }
        };
        let data = (0..batch * noise_len).map(|_| standard_normal(rng)).collect();
        Tensor::new(&[batch, noise_len], data)
    }
}

/// A generator/discriminator pair of one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "config", rename_all = "snake_case")]
pub enum GanSpec {
    Rgan(RganConfig),
    Tgan(TganConfig),
}

impl GanSpec {
    pub fn family(&self) -> &'static str {
        match self {
            GanSpec::Rgan(_) => "rgan",
            GanSpec::Tgan(_) => "tgan",
        }
    }

    pub fn generator(&self) -> ModelSpec {
        match self {
            GanSpec::Rgan(c) => ModelSpec::RganGenerator(c.clone()),
            GanSpec::Tgan(c) => ModelSpec::TganGenerator(c.clone()),
        }
    }

    pub fn discriminator(&self) -> ModelSpec {
        match self {
            GanSpec::Rgan(c) => ModelSpec::RganDiscriminator(c.clone()),
            GanSpec::Tgan(c) => ModelSpec::TganDiscriminator(c.clone()),
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            GanSpec::Rgan(c) => c.dims,
            GanSpec::Tgan(c) => c.dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator().validate()
    }

    /// Generator plus discriminator parameters.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self.generator().param_count()? + self.discriminator().param_count()?)
    }
}

/// A network and its trained parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl ModelParams {
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let params = spec.init(rng)?;
        Ok(Self { spec, params })
    }

    pub fn count_params(&self) -> usize {
        count_params(&self.params)
    }

    /// Eval-mode forward on a fresh tape with frozen parameters.
    pub fn infer(&self, x: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x);
        // eval mode never draws from the rng
        let mut rng = crate::rng::seeded(0);
        let y = self.spec.forward(&mut tape, &p, xv, Mode::Eval, &mut rng)?;
        Ok(tape.value(y).clone())
    }
}

/// Sum of element counts over all trainable tensors.
pub fn count_params(params: &ParamSet) -> usize {
    params.count()
}

/// Source of synthetic `[C, L]` windows.
pub trait Generate {
    fn generate(&self, n: usize, rng: &mut Rng) -> Result<Vec<Tensor>>;
}

/// Maps `[C, L]` windows to class indices.
pub trait Classify {
    fn predict(&self, windows: &[Tensor]) -> Result<Vec<usize>>;
}

/// Windows per eval-mode forward; bounds tape memory on large requests.
const INFER_CHUNK: usize = 64;

impl Generate for ModelParams {
    fn generate(&self, n: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
        if self.spec.role() != Role::Generator {
            return Err(Error::InvalidArgument(format!("{} is not a generator", self.spec.arch())));
        }
        let mut out = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let b = left.min(INFER_CHUNK);
            let z = self.spec.sample_noise(b, rng)?;
            let y = self.infer(z)?;
            out.extend((0..b).map(|i| y.index_first(i)).collect::<Result<Vec<_>>>()?);
            left -= b;
        }
        Ok(out)
    }
}

impl Classify for ModelParams {
    fn predict(&self, windows: &[Tensor]) -> Result<Vec<usize>> {
        if self.spec.role() != Role::Classifier {
            return Err(Error::InvalidArgument(format!("{} is not a classifier", self.spec.arch())));
        }
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFER_CHUNK) {
            let refs: Vec<&Tensor> = chunk.iter().collect();
            let logits = self.infer(Tensor::stack(&refs)?)?;
            out.extend(logits.data().chunks(self.spec.dims().classes).map(argmax));
        }
        Ok(out)
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
