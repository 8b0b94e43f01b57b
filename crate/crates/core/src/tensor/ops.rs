//! Raw kernels over flat row-major buffers. Shape validation lives in the tape.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Relu,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Add | Elementwise::Sub | Elementwise::Mul)
    }
}

/// How the two operands of a binary op index into their own buffers.
pub(crate) enum Broadcast {
    Same,
    /// `b` is a trailing block of `a`'s shape and repeats.
    RepeatRhs(usize),
    RepeatLhs(usize),
    Table { lhs: Vec<usize>, rhs: Vec<usize> },
}

impl Broadcast {
    #[inline]
    pub fn lhs(&self, i: usize) -> usize {
        match self {
            Broadcast::Same | Broadcast::RepeatRhs(_) => i,
            Broadcast::RepeatLhs(n) => i % n,
            Broadcast::Table { lhs, .. } => lhs[i],
        }
    }

    #[inline]
    pub fn rhs(&self, i: usize) -> usize {
        match self {
            Broadcast::Same | Broadcast::RepeatLhs(_) => i,
            Broadcast::RepeatRhs(n) => i % n,
            Broadcast::Table { rhs, .. } => rhs[i],
        }
    }
}

/// Numpy-style broadcasting over trailing dimensions.
pub(crate) fn broadcast(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<(Vec<usize>, Broadcast)> {
    if a == b {
        return Ok((a.to_vec(), Broadcast::Same));
    }
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        return Ok((a.to_vec(), Broadcast::RepeatRhs(b.iter().product())));
    }
    if a.len() < b.len() && b[b.len() - a.len()..] == *a {
        return Ok((b.to_vec(), Broadcast::RepeatLhs(a.iter().product())));
    }
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut out = Vec::with_capacity(rank);
    for (&x, &y) in pa.iter().zip(&pb) {
        if x == y || y == 1 {
            out.push(x);
        } else if x == 1 {
            out.push(y);
        } else {
            return Err(Error::shape(op, a, b));
        }
    }
    let strides = |s: &[usize]| {
        let mut st = vec![0; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            st[d] = if s[d] == 1 { 0 } else { acc };
            acc *= s[d];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let numel: usize = out.iter().product();
    let mut lhs = Vec::with_capacity(numel);
    let mut rhs = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    for _ in 0..numel {
        lhs.push(idx.iter().zip(&sa).map(|(i, s)| i * s).sum());
        rhs.push(idx.iter().zip(&sb).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok((out, Broadcast::Table { lhs, rhs }))
}

// The three products below go through a strided GEMM; the transposed
// operands are expressed as strides rather than copied.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    // SAFETY: the bounds above cover every element the strides address.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(g.len() >= m * n && b.len() >= k * n && out.len() >= m * k);
    // SAFETY: as in matmul_acc.
    unsafe {
        matrixmultiply::dgemm(
            m, n, k, 1.0,
            g.as_ptr(), n as isize, 1,
            b.as_ptr(), 1, n as isize,
            1.0,
            out.as_mut_ptr(), k as isize, 1,
        );
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && g.len() >= m * n && out.len() >= k * n);
    // SAFETY: as in matmul_acc.
    unsafe {
        matrixmultiply::dgemm(
            k, m, n, 1.0,
            a.as_ptr(), 1, k as isize,
            g.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Cross-correlation of `x[batch×c_in×len]` with `w[c_out×c_in×k]`, zero padded.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    bias: Option<&[f64]>,
    out: &mut [f64],
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    k: usize,
    pad: usize,
    out_len: usize,
) {
    for bi in 0..batch {
        for o in 0..c_out {
            let orow = &mut out[(bi * c_out + o) * out_len..(bi * c_out + o + 1) * out_len];
            if let Some(b) = bias {
                orow.iter_mut().for_each(|v| *v = b[o]);
            }
            for c in 0..c_in {
                let xrow = &x[(bi * c_in + c) * len..(bi * c_in + c + 1) * len];
                for kk in 0..k {
                    let wv = w[(o * c_in + c) * k + kk];
                    // output t reads input t + kk - pad
                    let t_lo = pad.saturating_sub(kk);
                    let t_hi = (len + pad).saturating_sub(kk).min(out_len);
                    for t in t_lo..t_hi {
                        orow[t] += wv * xrow[t + kk - pad];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gw: Option<&mut [f64]>,
    mut gb: Option<&mut [f64]>,
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    k: usize,
    pad: usize,
    out_len: usize,
) {
    for bi in 0..batch {
        for o in 0..c_out {
            let grow = &g[(bi * c_out + o) * out_len..(bi * c_out + o + 1) * out_len];
            if let Some(gb) = gb.as_deref_mut() {
                gb[o] += grow.iter().sum::<f64>();
            }
            for c in 0..c_in {
                let xoff = (bi * c_in + c) * len;
                for kk in 0..k {
                    let t_lo = pad.saturating_sub(kk);
                    let t_hi = (len + pad).saturating_sub(kk).min(out_len);
                    let widx = (o * c_in + c) * k + kk;
                    if let Some(gw) = gw.as_deref_mut() {
                        let mut acc = 0.0;
                        for t in t_lo..t_hi {
                            acc += grow[t] * x[xoff + t + kk - pad];
                        }
                        gw[widx] += acc;
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let wv = w[widx];
                        for t in t_lo..t_hi {
                            gx[xoff + t + kk - pad] += grow[t] * wv;
                        }
                    }
                }
            }
        }
    }
}
