use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

use super::fan_in_uniform;

/// Stride-1 1D convolution over `[c_in, len]` or `[batch, c_in, len]`.
///
/// Weights are `[c_out, c_in, k]`. The default padding `(k - 1) / 2` keeps
/// the length unchanged for odd `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub padding: usize,
}

impl Conv1d {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel_size,
            padding: kernel_size.saturating_sub(1) / 2,
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_size + self.out_channels
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        let fan_in = self.in_channels * self.kernel_size;
        params.insert(
            self.weight_name(),
            fan_in_uniform(&[self.out_channels, self.in_channels, self.kernel_size], fan_in, rng),
        )?;
        params.insert(self.bias_name(), fan_in_uniform(&[self.out_channels], fan_in, rng))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        let channels = if shape.len() >= 2 { shape[shape.len() - 2] } else { 0 };
        if channels != self.in_channels {
            return Err(Error::InvalidArgument(format!(
                "{}: expected {} input channels, got shape {shape:?}",
                self.name, self.in_channels
            )));
        }
        let w = p.get(&self.weight_name())?;
        let b = p.get(&self.bias_name())?;
        tape.conv1d(x, w, Some(b), self.padding)
    }
}
