use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Tape, Var};

use super::fan_in_uniform;

/// Stacked LSTM with zero initial state.
///
/// Per layer, gate pre-activations are `x_t·W_ih + h_{t-1}·W_hh + b` with the
/// four gates packed `[input, forget, candidate, output]` along the last
/// axis, so `W_ih` is `[in, 4H]` and `W_hh` is `[H, 4H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub name: String,
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
}

pub struct LstmOutput {
    /// Last layer's hidden state at every step, `[batch, len, hidden]`
    /// (`[len, hidden]` for unbatched input).
    pub outputs: Var,
    /// Last layer's hidden state after the final step, `[batch, hidden]`
    /// (`[hidden]` for unbatched input).
    pub final_hidden: Var,
}

impl Lstm {
    pub fn new(name: impl Into<String>, input_size: usize, hidden_size: usize, num_layers: usize) -> Self {
        Self {
            name: name.into(),
            input_size,
            hidden_size,
            num_layers,
        }
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    pub fn param_count(&self) -> usize {
        let g = 4 * self.hidden_size;
        (0..self.num_layers)
            .map(|l| self.layer_input(l) * g + self.hidden_size * g + g)
            .sum()
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
        let h = self.hidden_size;
        for l in 0..self.num_layers {
            let prefix = format!("{}.l{l}", self.name);
            params.insert(
                format!("{prefix}.w_ih"),
                fan_in_uniform(&[self.layer_input(l), 4 * h], h, rng),
            )?;
            params.insert(format!("{prefix}.w_hh"), fan_in_uniform(&[h, 4 * h], h, rng))?;
            let mut bias = fan_in_uniform(&[4 * h], h, rng);
            // forget gate starts open
            bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b += 1.0);
            params.insert(format!("{prefix}.bias"), bias)?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<LstmOutput> {
        let shape = tape.shape(x).to_vec();
        let (batched, batch, len, feat) = match shape.as_slice() {
            [l, f] => (false, 1, *l, *f),
            [b, l, f] => (true, *b, *l, *f),
            _ => (false, 0, 0, 0),
        };
        if feat != self.input_size || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "{}: expected [batch, len, {}] input, got {shape:?}",
                self.name, self.input_size
            )));
        }
        let h = self.hidden_size;
        let mut seq = if batched {
            x
        } else {
            tape.reshape(x, &[1, len, feat])?
        };
        let mut last_h = None;
        for l in 0..self.num_layers {
            let prefix = format!("{}.l{l}", self.name);
            let w_ih = p.get(&format!("{prefix}.w_ih"))?;
            let w_hh = p.get(&format!("{prefix}.w_hh"))?;
            let bias = p.get(&format!("{prefix}.bias"))?;
            // input contribution for every step in one product
            let xw = tape.matmul(seq, w_ih)?;
            let xw = tape.add(xw, bias)?;
            let mut hidden: Option<Var> = None;
            let mut cell: Option<Var> = None;
            let mut steps = Vec::with_capacity(len);
            for t in 0..len {
                let gx = tape.narrow(xw, 1, t, 1)?;
                let mut gates = tape.reshape(gx, &[batch, 4 * h])?;
                if let Some(hp) = hidden {
                    let gh = tape.matmul(hp, w_hh)?;
                    gates = tape.add(gates, gh)?;
                }
                let i = tape.narrow(gates, 1, 0, h)?;
                let i = tape.sigmoid(i);
                let g = tape.narrow(gates, 1, 2 * h, h)?;
                let g = tape.tanh(g);
                let o = tape.narrow(gates, 1, 3 * h, h)?;
                let o = tape.sigmoid(o);
                let ig = tape.mul(i, g)?;
                let c = match cell {
                    Some(cp) => {
                        let f = tape.narrow(gates, 1, h, h)?;
                        let f = tape.sigmoid(f);
                        let fc = tape.mul(f, cp)?;
                        tape.add(fc, ig)?
                    }
                    None => ig,
                };
                let tc = tape.tanh(c);
                let hn = tape.mul(o, tc)?;
                steps.push(tape.reshape(hn, &[batch, 1, h])?);
                hidden = Some(hn);
                cell = Some(c);
            }
            seq = tape.concat(&steps, 1)?;
            last_h = hidden;
        }
        let final_hidden = last_h.expect("at least one layer and one step");
        if batched {
            Ok(LstmOutput {
                outputs: seq,
                final_hidden,
            })
        } else {
            Ok(LstmOutput {
                outputs: tape.reshape(seq, &[len, h])?,
                final_hidden: tape.reshape(final_hidden, &[h])?,
            })
        }
    }
}
