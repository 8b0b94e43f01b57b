use super::ops::{self, Elementwise};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Reduce {
        input: Var,
        op: ReduceOp,
        axis: usize,
        argmax: Vec<usize>,
    },
    SumAll(Var),
    Softmax(Var),
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        pad: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records operations in execution order so gradients can be replayed in
/// reverse. One tape serves one forward/backward pass; a second `backward`
/// on the same tape is rejected.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A trainable input whose gradient is wanted.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.grad(v)
            .map(|g| Tensor::new(self.shape(v), g.to_vec()).expect("grad shape matches value"))
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary_node(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape(), data).expect("unary preserves shape");
        let rg = self.rg(&[a]);
        self.push(value, rg, op)
    }

    fn binary_node(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (shape, plan) = ops::broadcast(name, self.shape(a), self.shape(b))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|i| f(da[plan.lhs(i)], db[plan.rhs(i)]))
            .collect();
        let value = Tensor::new(&shape, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, op))
    }

    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (op.is_binary(), b) {
            (true, Some(b)) => match op {
                Elementwise::Add => self.add(a, b),
                Elementwise::Sub => self.sub(a, b),
                _ => self.mul(a, b),
            },
            (false, None) => Ok(match op {
                Elementwise::Tanh => self.tanh(a),
                Elementwise::Sigmoid => self.sigmoid(a),
                Elementwise::Exp => self.exp(a),
                Elementwise::Log => self.log(a),
                _ => self.relu(a),
            }),
            (true, None) => Err(Error::InvalidArgument(format!("{op:?} needs two operands"))),
            (false, Some(_)) => Err(Error::InvalidArgument(format!("{op:?} takes one operand"))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_node("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_node("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_node("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_node("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary_node(a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary_node(a, |x| x + c, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary_node(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary_node(a, ops::sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_node(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary_node(a, f64::ln, Op::Log(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary_node(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary_node(
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    /// Matrix product over the last two axes.
    ///
    /// Accepts `[m,k]·[k,n]`, `[B,m,k]·[k,n]` (shared right operand) and
    /// `[B,m,k]·[B,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, m, k, n, shared) = matmul_dims(&sa, &sb)?;
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for bi in 0..batch {
            let boff = if shared { 0 } else { bi * k * n };
            ops::matmul_acc(
                &da[bi * m * k..(bi + 1) * m * k],
                &db[boff..boff + k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let value = Tensor::new(&shape, out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::InvalidAxis {
                axis: 1,
                shape,
            });
        }
        let r = shape.len();
        let (m, n) = (shape[r - 2], shape[r - 1]);
        let batch = shape[..r - 2].iter().product::<usize>();
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        transpose_into(src, &mut out, batch, m, n);
        let mut new_shape = shape.clone();
        new_shape.swap(r - 2, r - 1);
        let value = Tensor::new(&new_shape, out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, rg, Op::Reshape(a)))
    }

    /// Reduces along `axis`; with `keepdim` the axis stays with length 1.
    pub fn reduce(&mut self, op: ReduceOp, a: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis { axis, shape });
        }
        let (outer, n, inner) = ops::split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                for o in 0..outer {
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += src[base + i];
                        }
                    }
                }
                if op == ReduceOp::Mean {
                    out.iter_mut().for_each(|v| *v /= n as f64);
                }
            }
            ReduceOp::Max => {
                argmax = vec![0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = 0;
                        for j in 1..n {
                            if src[(o * n + j) * inner + i] > src[(o * n + best) * inner + i] {
                                best = j;
                            }
                        }
                        argmax[o * inner + i] = best;
                        out[o * inner + i] = src[(o * n + best) * inner + i];
                    }
                }
            }
        }
        let mut new_shape = shape;
        if keepdim {
            new_shape[axis] = 1;
        } else {
            new_shape.remove(axis);
        }
        let value = Tensor::new(&new_shape, out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(
            value,
            rg,
            Op::Reduce {
                input: a,
                op,
                axis,
                argmax,
            },
        ))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), rg, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let n = *shape.last().ok_or(Error::InvalidAxis {
            axis: 0,
            shape: vec![],
        })?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let value = Tensor::new(&shape, out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, rg, Op::Softmax(a)))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis { axis, shape });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(Error::InvalidArgument(format!(
                "narrow [{start}, {}) out of range for axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = ops::split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let value = Tensor::new(&new_shape, out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, rg, Op::Narrow { input: a, axis, start }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidAxis { axis, shape: base });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = ops::split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let n = t.shape()[axis];
                out.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, out)?;
        let rg = self.rg(inputs);
        Ok(self.push(
            value,
            rg,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// 1D cross-correlation, stride 1, symmetric zero padding.
    ///
    /// `x` is `[c_in, len]` or `[batch, c_in, len]`, `w` is `[c_out, c_in, k]`
    /// and `b` is `[c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 3 || !(xs.len() == 2 || xs.len() == 3) {
            return Err(Error::shape("conv1d", &xs, &ws));
        }
        let (batch, c_in, len) = match xs.len() {
            2 => (1, xs[0], xs[1]),
            _ => (xs[0], xs[1], xs[2]),
        };
        let (c_out, k) = (ws[0], ws[2]);
        if ws[1] != c_in {
            return Err(Error::shape("conv1d channels", &xs, &ws));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv1d bias", self.shape(b), &[c_out]));
            }
        }
        if len + 2 * pad < k {
            return Err(Error::InvalidArgument(format!(
                "kernel {k} longer than padded input {}",
                len + 2 * pad
            )));
        }
        let out_len = len + 2 * pad - k + 1;
        let mut out = vec![0.0; batch * c_out * out_len];
        ops::conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &mut out,
            batch,
            c_in,
            len,
            c_out,
            k,
            pad,
            out_len,
        );
        let shape = if xs.len() == 2 {
            vec![c_out, out_len]
        } else {
            vec![batch, c_out, out_len]
        };
        let value = Tensor::new(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(value, rg, Op::Conv1d { x, w, b, pad }))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias` (both of the last axis' length).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "layer norm needs at least 2 features, got shape {shape:?}"
            )));
        }
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::shape("layer_norm affine", self.shape(gain), &[d]));
        }
        let src = self.value(x).data();
        let (g, bb) = (self.value(gain).data(), self.value(bias).data());
        let rows = src.len() / d;
        let mut out = vec![0.0; src.len()];
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                out[r * d + j] = (row[j] - mu) * rs * g[j] + bb[j];
            }
            mean.push(mu);
            rstd.push(rs);
        }
        let value = Tensor::new(&shape, out)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            value,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            },
        ))
    }

    /// Mean softmax cross-entropy of `logits` (`[n_classes]` or
    /// `[batch, n_classes]`) against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (batch, n) = match shape.as_slice() {
            [n] => (1, *n),
            [b, n] => (*b, *n),
            _ => return Err(Error::shape("cross_entropy", &shape, &[targets.len()])),
        };
        if targets.len() != batch {
            return Err(Error::shape("cross_entropy targets", &shape, &[targets.len()]));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::InvalidArgument(format!(
                "target class {t} out of range for {n} classes"
            )));
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; src.len()];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &src[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - row[t];
            for j in 0..n {
                probs[r * n + j] = (row[j] - lse).exp();
            }
        }
        let value = Tensor::scalar(loss / batch as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            value,
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Mean binary cross-entropy on raw logits; targets must be 0 or 1.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let src = self.value(logits).data();
        if targets.len() != src.len() {
            return Err(Error::shape(
                "bce_with_logits",
                self.shape(logits),
                &[targets.len()],
            ));
        }
        if let Some(t) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binary target must be 0 or 1, got {t}"
            )));
        }
        let loss = src
            .iter()
            .zip(targets)
            .map(|(&x, &t)| ops::softplus(x) - x * t)
            .sum::<f64>()
            / src.len() as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Populates gradients of the scalar `loss` on every node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                let (_, plan) = ops::broadcast("grad", self.shape(*a), self.shape(*b))
                    .expect("shapes validated in forward");
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let op = &node.op;
                if self.requires_grad(*a) {
                    let mut ga = vec![0.0; va.len()];
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match op {
                            Op::Add(..) | Op::Sub(..) => 1.0,
                            Op::Mul(..) => vb[plan.rhs(i)],
                            _ => 1.0 / vb[plan.rhs(i)],
                        };
                        ga[plan.lhs(i)] += gi * d;
                    }
                    accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; vb.len()];
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match op {
                            Op::Add(..) => 1.0,
                            Op::Sub(..) => -1.0,
                            Op::Mul(..) => va[plan.lhs(i)],
                            _ => {
                                let y = vb[plan.rhs(i)];
                                -va[plan.lhs(i)] / (y * y)
                            }
                        };
                        gb[plan.rhs(i)] += gi * d;
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, f) => {
                let f = *f;
                self.unary_grad(grads, *a, g, |_| f);
            }
            Op::Offset(a) | Op::Reshape(a) => {
                if self.requires_grad(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
            }
            Op::Tanh(a) => self.unary_grad(grads, *a, g, |i| 1.0 - out[i] * out[i]),
            Op::Sigmoid(a) => self.unary_grad(grads, *a, g, |i| out[i] * (1.0 - out[i])),
            Op::Exp(a) => self.unary_grad(grads, *a, g, |i| out[i]),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.unary_grad(grads, *a, g, |i| 1.0 / x[i])
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.unary_grad(grads, *a, g, |i| if x[i] > 0.0 { 1.0 } else { 0.0 })
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a).data();
                let s = *slope;
                self.unary_grad(grads, *a, g, |i| if x[i] > 0.0 { 1.0 } else { s })
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (batch, m, k, n, shared) = matmul_dims(sa, sb).expect("validated");
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    let mut ga = vec![0.0; va.len()];
                    for bi in 0..batch {
                        let boff = if shared { 0 } else { bi * k * n };
                        ops::matmul_bt_acc(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &vb[boff..boff + k * n],
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                    accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; vb.len()];
                    for bi in 0..batch {
                        let boff = if shared { 0 } else { bi * k * n };
                        ops::matmul_at_acc(
                            &va[bi * m * k..(bi + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut gb[boff..boff + k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => {
                if self.requires_grad(*a) {
                    let s = node.value.shape();
                    let r = s.len();
                    let batch = s[..r - 2].iter().product();
                    let mut ga = vec![0.0; g.len()];
                    transpose_into(g, &mut ga, batch, s[r - 2], s[r - 1]);
                    accumulate(grads, *a, ga);
                }
            }
            Op::Reduce {
                input,
                op,
                axis,
                argmax,
            } => {
                if self.requires_grad(*input) {
                    let (outer, n, inner) = ops::split_axis(self.shape(*input), *axis);
                    let mut ga = vec![0.0; outer * n * inner];
                    for o in 0..outer {
                        for i in 0..inner {
                            let gi = g[o * inner + i];
                            match op {
                                ReduceOp::Sum | ReduceOp::Mean => {
                                    let s = if *op == ReduceOp::Mean { gi / n as f64 } else { gi };
                                    for j in 0..n {
                                        ga[(o * n + j) * inner + i] += s;
                                    }
                                }
                                ReduceOp::Max => {
                                    ga[(o * n + argmax[o * inner + i]) * inner + i] += gi;
                                }
                            }
                        }
                    }
                    accumulate(grads, *input, ga);
                }
            }
            Op::SumAll(a) => {
                if self.requires_grad(*a) {
                    accumulate(grads, *a, vec![g[0]; self.value(*a).numel()]);
                }
            }
            Op::Softmax(a) => {
                if self.requires_grad(*a) {
                    let n = *node.value.shape().last().expect("rank checked");
                    let mut ga = vec![0.0; g.len()];
                    for r in 0..g.len() / n {
                        let (y, gr) = (&out[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            ga[r * n + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(grads, *a, ga);
                }
            }
            Op::Narrow { input, axis, start } => {
                if self.requires_grad(*input) {
                    let (outer, n, inner) = ops::split_axis(self.shape(*input), *axis);
                    let len = node.value.shape()[*axis];
                    // add into the input's buffer; a full-size temporary per
                    // slice makes a sequence of narrows quadratic
                    let ga = grads[input.0].get_or_insert_with(|| vec![0.0; outer * n * inner]);
                    for o in 0..outer {
                        let dst = (o * n + start) * inner;
                        ga[dst..dst + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = ops::split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let n = self.shape(*v)[*axis];
                    if self.requires_grad(*v) {
                        let mut gv = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            gv.extend_from_slice(&g[src..src + n * inner]);
                        }
                        accumulate(grads, *v, gv);
                    }
                    offset += n;
                }
            }
            Op::Conv1d { x, w, b, pad } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (batch, c_in, len) = match xs.len() {
                    2 => (1, xs[0], xs[1]),
                    _ => (xs[0], xs[1], xs[2]),
                };
                let (c_out, k) = (ws[0], ws[2]);
                let out_len = *node.value.shape().last().expect("rank 2 or 3");
                let mut gx = self.requires_grad(*x).then(|| vec![0.0; batch * c_in * len]);
                let mut gw = self.requires_grad(*w).then(|| vec![0.0; c_out * c_in * k]);
                let mut gb = b
                    .filter(|b| self.requires_grad(*b))
                    .map(|_| vec![0.0; c_out]);
                ops::conv1d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                    batch,
                    c_in,
                    len,
                    c_out,
                    k,
                    *pad,
                    out_len,
                );
                if let Some(gx) = gx {
                    accumulate(grads, *x, gx);
                }
                if let Some(gw) = gw {
                    accumulate(grads, *w, gw);
                }
                if let (Some(gb), Some(b)) = (gb, b) {
                    accumulate(grads, *b, gb);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let src = self.value(*x).data();
                let gn = self.value(*gain).data();
                let d = gn.len();
                let rows = src.len() / d;
                let mut gx = vec![0.0; src.len()];
                let mut ggain = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for r in 0..rows {
                    let (mu, rs) = (mean[r], rstd[r]);
                    for j in 0..d {
                        let gi = g[r * d + j];
                        xhat[j] = (src[r * d + j] - mu) * rs;
                        dxhat[j] = gi * gn[j];
                        ggain[j] += gi * xhat[j];
                        gbias[j] += gi;
                    }
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx[r * d + j] = rs * (dxhat[j] - m1 - xhat[j] * m2);
                    }
                }
                if self.requires_grad(*x) {
                    accumulate(grads, *x, gx);
                }
                if self.requires_grad(*gain) {
                    accumulate(grads, *gain, ggain);
                }
                if self.requires_grad(*bias) {
                    accumulate(grads, *bias, gbias);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if self.requires_grad(*logits) {
                    let batch = targets.len();
                    let n = probs.len() / batch;
                    let scale = g[0] / batch as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[r * n + t] -= scale;
                    }
                    accumulate(grads, *logits, gl);
                }
            }
            Op::BceWithLogits { logits, targets } => {
                if self.requires_grad(*logits) {
                    let src = self.value(*logits).data();
                    let scale = g[0] / src.len() as f64;
                    let gl = src
                        .iter()
                        .zip(targets)
                        .map(|(&x, &t)| (ops::sigmoid(x) - t) * scale)
                        .collect();
                    accumulate(grads, *logits, gl);
                }
            }
        }
    }

    fn unary_grad(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: Var,
        g: &[f64],
        d: impl Fn(usize) -> f64,
    ) {
        if self.requires_grad(a) {
            let ga = g.iter().enumerate().map(|(i, &gi)| gi * d(i)).collect();
            accumulate(grads, a, ga);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
        slot @ None => *slot = Some(g),
    }
}

fn transpose_into(src: &[f64], dst: &mut [f64], batch: usize, m: usize, n: usize) {
    for b in 0..batch {
        let off = b * m * n;
        for i in 0..m {
            for j in 0..n {
                dst[off + j * m + i] = src[off + i * n + j];
            }
        }
    }
}

/// Returns `(batch, m, k, n, rhs_shared)`.
fn matmul_dims(sa: &[usize], sb: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    let err = || Error::shape("matmul", sa, sb);
    match (sa.len(), sb.len()) {
        (2, 2) if sa[1] == sb[0] => Ok((1, sa[0], sa[1], sb[1], true)),
        (3, 2) if sa[2] == sb[0] => Ok((sa[0], sa[1], sa[2], sb[1], true)),
        (3, 3) if sa[0] == sb[0] && sa[2] == sb[1] => Ok((sa[0], sa[1], sa[2], sb[2], false)),
        _ => Err(err()),
    }
}
