use serde::{Deserialize, Serialize};

use super::blocks::{EncoderTrunk, Network};
use super::Dims;
use crate::error::{Error, Result};
use crate::nn::{dropout, Linear, Mode};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{ReduceOp, Tape, Var};

/// Transformer GAN hyperparameters. Both networks share `d_model` and
/// `d_ff`; head and layer counts are per network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TganConfig {
    pub dims: Dims,
    pub noise_len: usize,
    pub d_model: usize,
    pub generator_heads: usize,
    pub discriminator_heads: usize,
    pub generator_layers: usize,
    pub discriminator_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl TganConfig {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            noise_len: dims.length,
            d_model: 32,
            generator_heads: 4,
            discriminator_heads: 4,
            generator_layers: 2,
            discriminator_layers: 2,
            d_ff: 64,
            dropout: 0.1,
        }
    }

    pub fn tiny(dims: Dims) -> Self {
        Self {
            dims,
            noise_len: 4,
            d_model: 8,
            generator_heads: 2,
            discriminator_heads: 2,
            generator_layers: 1,
            discriminator_layers: 1,
            d_ff: 8,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let bad = |m: String| Err(Error::Config(format!("tgan: {m}")));
        if self.noise_len == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("noise_len, d_model and d_ff must be positive".into());
        }
        for heads in [self.generator_heads, self.discriminator_heads] {
            if heads == 0 || self.d_model % heads != 0 {
                return bad(format!("d_model {} is not divisible by {heads} heads", self.d_model));
            }
        }
        if self.d_model < 2 {
            return bad("d_model must be at least 2 for layer normalization".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Noise -> length-L seed signal -> pointwise embedding plus positional
/// encoding -> encoder stack -> dropout -> pointwise head to C channels.
pub(crate) struct Generator {
    dims: Dims,
    seed: Linear,
    trunk: EncoderTrunk,
    head: Linear,
    dropout: f64,
}

pub(crate) fn generator(c: &TganConfig) -> Result<Generator> {
    Ok(Generator {
        dims: c.dims,
        seed: Linear::new("gen.seed", c.noise_len, c.dims.length),
        trunk: EncoderTrunk::new(
            "gen",
            1,
            c.dims.length,
            c.d_model,
            c.generator_heads,
            c.generator_layers,
            c.d_ff,
        )?,
        head: Linear::new("gen.head", c.d_model, c.dims.channels),
        dropout: c.dropout,
    })
}

impl Network for Generator {
    fn param_count(&self) -> usize {
        self.seed.param_count() + self.trunk.param_count() + self.head.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.seed.init(params, rng)?;
        self.trunk.init(params, rng)?;
        self.head.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, z: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let b = tape.shape(z)[0];
        let s = self.seed.forward(tape, p, z)?;
        let s = tape.reshape(s, &[b, self.dims.length, 1])?;
        let h = self.trunk.forward(tape, p, s)?;
        let h = dropout(tape, h, self.dropout, mode, rng)?;
        let y = self.head.forward(tape, p, h)?;
        tape.transpose(y)
    }
}

/// Pointwise embedding plus positional encoding -> encoder stack -> mean
/// over positions -> dropout -> head to one logit.
pub(crate) struct Discriminator {
    trunk: EncoderTrunk,
    head: Linear,
    dropout: f64,
}

pub(crate) fn discriminator(c: &TganConfig) -> Result<Discriminator> {
    Ok(Discriminator {
        trunk: EncoderTrunk::new(
            "disc",
            c.dims.channels,
            c.dims.length,
            c.d_model,
            c.discriminator_heads,
            c.discriminator_layers,
            c.d_ff,
        )?,
        head: Linear::new("disc.head", c.d_model, 1),
        dropout: c.dropout,
    })
}

impl Network for Discriminator {
    fn param_count(&self) -> usize {
        self.trunk.param_count() + self.head.param_count()
    }

    fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        self.trunk.init(params, rng)?;
        self.head.init(params, rng)
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let b = tape.shape(x)[0];
        let logit = pooled_head(tape, p, x, &self.trunk, &self.head, self.dropout, mode, rng)?;
        tape.reshape(logit, &[b])
    }
}

/// `[B, C, L]` windows through an encoder trunk, mean-pooled over
/// positions, then a dense head: `[B, out]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pooled_head(
    tape: &mut Tape,
    p: &Bound,
    x: Var,
    trunk: &EncoderTrunk,
    head: &Linear,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let seq = tape.transpose(x)?;
    let h = trunk.forward(tape, p, seq)?;
    let pooled = tape.reduce(ReduceOp::Mean, h, 1, false)?;
    let pooled = dropout(tape, pooled, rate, mode, rng)?;
    head.forward(tape, p, pooled)
}
