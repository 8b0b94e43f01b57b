use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

use super::fan_in_uniform;

/// Affine map over the last axis; weight is `[in, out]`.
///
/// On a `[.., len, channels]` sequence this is the same map as a kernel-1
/// convolution over the channel axis, which is how the pointwise
/// projections and heads are realised.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub bias: bool,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        Self {
            name: name.into(),
            in_features,
            out_features,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn param_count(&self) -> usize {
        self.in_features * self.out_features + if self.bias { self.out_features } else { 0 }
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        params.insert(
            format!("{}.weight", self.name),
            fan_in_uniform(&[self.in_features, self.out_features], self.in_features, rng),
        )?;
        if !self.bias {
            return Ok(());
        }
        params.insert(
            format!("{}.bias", self.name),
            fan_in_uniform(&[self.out_features], self.in_features, rng),
        )
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        if tape.shape(x).last() != Some(&self.in_features) {
            return Err(Error::InvalidArgument(format!(
                "{}: expected trailing size {}, got shape {:?}",
                self.name,
                self.in_features,
                tape.shape(x)
            )));
        }
        let w = p.get(&format!("{}.weight", self.name))?;
        let xw = if tape.shape(x).len() == 1 {
            let row = tape.reshape(x, &[1, self.in_features])?;
            let y = tape.matmul(row, w)?;
            tape.reshape(y, &[self.out_features])?
        } else {
            tape.matmul(x, w)?
        };
        if !self.bias {
            return Ok(xw);
        }
        let b = p.get(&format!("{}.bias", self.name))?;
        tape.add(xw, b)
    }
}
