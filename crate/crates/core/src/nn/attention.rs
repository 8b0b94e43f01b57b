use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

use super::Linear;

/// Scaled dot-product attention, `softmax(q·kᵀ / sqrt(d_k))·v`, with the
/// softmax taken over keys.
///
/// Shapes are `[.., len_q, d_k]`, `[.., len_k, d_k]` and `[.., len_k, d_v]`.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    attention_with_weights(tape, q, k, v).map(|(out, _)| out)
}

/// Like [`attention`], also returning the `[.., len_q, len_k]` weights.
pub fn attention_with_weights(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let (qs, ks, vs) = (
        tape.shape(q).to_vec(),
        tape.shape(k).to_vec(),
        tape.shape(v).to_vec(),
    );
    let rank = qs.len();
    let ok = rank >= 2
        && ks.len() == rank
        && vs.len() == rank
        && qs[rank - 1] == ks[rank - 1]
        && ks[rank - 2] == vs[rank - 2]
        && qs[..rank - 2] == ks[..rank - 2]
        && ks[..rank - 2] == vs[..rank - 2];
    if !ok {
        return Err(Error::ShapeMismatch {
            op: "attention",
            lhs: qs,
            rhs: [ks, vs].concat(),
        });
    }
    let d_k = qs[rank - 1];
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scores)?;
    let out = tape.matmul(weights, v)?;
    Ok((out, weights))
}

/// Multi-head self-attention with pointwise Q/K/V/output projections.
///
/// The key projection has no bias: a shift of every key by the same vector
/// moves each score row by a constant, which the softmax cancels.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub name: String,
    pub d_model: usize,
    pub heads: usize,
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
}

impl MultiHeadAttention {
    pub fn new(name: impl Into<String>, d_model: usize, heads: usize) -> Result<Self> {
        let name = name.into();
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "{name}: model dimension {d_model} is not divisible by {heads} heads"
            )));
        }
        let proj = |p: &str| Linear::new(format!("{name}.{p}"), d_model, d_model);
        Ok(Self {
            query: proj("q"),
            key: proj("k").without_bias(),
            value: proj("v"),
            output: proj("out"),
            name,
            d_model,
            heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn output_projection(&self) -> &Linear {
        &self.output
    }

    pub fn param_count(&self) -> usize {
        [&self.query, &self.key, &self.value, &self.output]
            .iter()
            .map(|l| l.param_count())
            .sum()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.init(params, rng)?;
        }
        Ok(())
    }

    /// `x` is `[len, d_model]` or `[batch, len, d_model]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let q = self.query.forward(tape, p, x)?;
        let k = self.key.forward(tape, p, x)?;
        let v = self.value.forward(tape, p, x)?;
        let axis = tape.shape(x).len() - 1;
        let dh = self.head_dim();
        let heads = if self.heads == 1 {
            vec![attention(tape, q, k, v)?]
        } else {
            let mut outs = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = tape.narrow(q, axis, h * dh, dh)?;
                let kh = tape.narrow(k, axis, h * dh, dh)?;
                let vh = tape.narrow(v, axis, h * dh, dh)?;
                outs.push(attention(tape, qh, kh, vh)?);
            }
            outs
        };
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat(&heads, axis)?
        };
        self.output.forward(tape, p, merged)
    }
}
