//! Forward kernels and their backward rules.
//!
//! Internally every op works on one sequence at a time, stored as a
//! row-major `[rows, width]` slice. Each forward returns whatever the matching
//! backward needs; backward functions accumulate (`+=`) into parameter
//! gradient slices and return the gradient with respect to the input.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};
use crate::math;

pub const LN_EPS: f64 = 1e-5;

/// `y = x w + b` for `x: [rows, inp]`, `w: [inp, out]`.
pub(crate) fn affine(x: &[f64], rows: usize, inp: usize, w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inp);
    debug_assert_eq!(w.len(), inp * out);
    let mut y = vec![0.0; rows * out];
    for r in 0..rows {
        let yr = &mut y[r * out..(r + 1) * out];
        yr.copy_from_slice(b);
        for (i, &xi) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yo, &wo) in yr.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                *yo += xi * wo;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_backward(
    x: &[f64],
    rows: usize,
    inp: usize,
    w: &[f64],
    out: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * inp];
    for r in 0..rows {
        let dyr = &dy[r * out..(r + 1) * out];
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        let xr = &x[r * inp..(r + 1) * inp];
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for i in 0..inp {
            let wi = &w[i * out..(i + 1) * out];
            dxr[i] = math::dot(wi, dyr);
            let xi = xr[i];
            if xi != 0.0 {
                for (dwo, &g) in dw[i * out..(i + 1) * out].iter_mut().zip(dyr) {
                    *dwo += xi * g;
                }
            }
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

pub(crate) fn ln_forward(x: &[f64], rows: usize, d: usize, gain: &[f64], bias: &[f64], eps: f64) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / math::sqrt(var + eps);
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = gain[c] * h + bias[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub(crate) fn ln_backward(
    cache: &LnCache,
    rows: usize,
    d: usize,
    gain: &[f64],
    dy: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        for c in 0..d {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = math::dot(&dxhat, xh) / d as f64;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] = rs * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

/// Two affine maps with a ReLU between them.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpWeights<'a> {
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
    pub inp: usize,
    pub hidden: usize,
    pub out: usize,
}

#[derive(Debug)]
pub(crate) struct MlpGrads<'a> {
    pub w1: &'a mut [f64],
    pub b1: &'a mut [f64],
    pub w2: &'a mut [f64],
    pub b2: &'a mut [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    x: Vec<f64>,
    hidden: Vec<f64>,
}

pub(crate) fn mlp_forward(w: &MlpWeights<'_>, x: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
    let mut hidden = affine(x, rows, w.inp, w.w1, w.b1, w.hidden);
    hidden.iter_mut().for_each(|h| *h = h.max(0.0));
    let y = affine(&hidden, rows, w.hidden, w.w2, w.b2, w.out);
    (y, MlpCache { x: x.to_vec(), hidden })
}

pub(crate) fn mlp_backward(w: &MlpWeights<'_>, g: MlpGrads<'_>, cache: &MlpCache, rows: usize, dy: &[f64]) -> Vec<f64> {
    let mut dh = affine_backward(&cache.hidden, rows, w.hidden, w.w2, w.out, dy, g.w2, g.b2);
    for (d, &h) in dh.iter_mut().zip(&cache.hidden) {
        if h <= 0.0 {
            *d = 0.0;
        }
    }
    affine_backward(&cache.x, rows, w.inp, w.w1, w.hidden, &dh, g.w1, g.b1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnWeights<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub bk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
}

#[derive(Debug)]
pub(crate) struct AttnGrads<'a> {
    pub wq: &'a mut [f64],
    pub bq: &'a mut [f64],
    pub wk: &'a mut [f64],
    pub bk: &'a mut [f64],
    pub wv: &'a mut [f64],
    pub bv: &'a mut [f64],
    pub wo: &'a mut [f64],
    pub bo: &'a mut [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct AttnCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[heads, t, t]`; entries above the diagonal stay exactly zero.
    probs: Vec<f64>,
    concat: Vec<f64>,
}

/// Causal multi-head self-attention over one sequence `x: [t, d]`.
pub(crate) fn attn_forward(w: &AttnWeights<'_>, x: &[f64], t: usize, d: usize, heads: usize) -> (Vec<f64>, AttnCache) {
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let q = affine(x, t, d, w.wq, w.bq, d);
    let k = affine(x, t, d, w.wk, w.bk, d);
    let v = affine(x, t, d, w.wv, w.bv, d);
    let mut probs = vec![0.0; heads * t * t];
    let mut concat = vec![0.0; t * d];
    let mut row = vec![0.0; t];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..t {
            let qi = &q[i * d + cols.start..i * d + cols.end];
            // Only keys at positions <= i take part; later ones are masked out.
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                let s = scale * math::dot(qi, &k[j * d + cols.start..j * d + cols.end]);
                row[j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for r in row.iter_mut().take(i + 1) {
                *r = math::exp(*r - max);
                sum += *r;
            }
            let p = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
            for j in 0..=i {
                p[j] = row[j] / sum;
            }
            let out = &mut concat[i * d + cols.start..i * d + cols.end];
            for j in 0..=i {
                let pj = p[j];
                for (o, &vv) in out.iter_mut().zip(&v[j * d + cols.start..j * d + cols.end]) {
                    *o += pj * vv;
                }
            }
        }
    }
    let y = affine(&concat, t, d, w.wo, w.bo, d);
    (y, AttnCache { x: x.to_vec(), q, k, v, probs, concat })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attn_backward(
    w: &AttnWeights<'_>,
    g: AttnGrads<'_>,
    cache: &AttnCache,
    t: usize,
    d: usize,
    heads: usize,
    dy: &[f64],
) -> Vec<f64> {
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let dconcat = affine_backward(&cache.concat, t, d, w.wo, d, dy, g.wo, g.bo);
    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut dp = vec![0.0; t];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..t {
            let p = &cache.probs[(h * t + i) * t..(h * t + i + 1) * t];
            let dout = &dconcat[i * d + cols.start..i * d + cols.end];
            let mut weighted = 0.0;
            for j in 0..=i {
                let vj = &cache.v[j * d + cols.start..j * d + cols.end];
                dp[j] = math::dot(dout, vj);
                weighted += p[j] * dp[j];
                for (dvv, &o) in dv[j * d + cols.start..j * d + cols.end].iter_mut().zip(dout) {
                    *dvv += p[j] * o;
                }
            }
            for j in 0..=i {
                let ds = scale * p[j] * (dp[j] - weighted);
                if ds == 0.0 {
                    continue;
                }
                for c in cols.clone() {
                    dq[i * d + c] += ds * cache.k[j * d + c];
                    dk[j * d + c] += ds * cache.q[i * d + c];
                }
            }
        }
    }
    let mut dx = affine_backward(&cache.x, t, d, w.wq, d, &dq, g.wq, g.bq);
    let dxk = affine_backward(&cache.x, t, d, w.wk, d, &dk, g.wk, g.bk);
    let dxv = affine_backward(&cache.x, t, d, w.wv, d, &dv, g.wv, g.bv);
    for ((a, b), c) in dx.iter_mut().zip(dxk).zip(dxv) {
        *a += b + c;
    }
    dx
}

fn check_matrix(w: &Tensor, rows: usize, name: &str) -> Result<usize> {
    match w.shape() {
        [r, c] if *r == rows => Ok(*c),
        s => Err(Error::shape(format!("{name} has shape {s:?}, expected [{rows}, _]"))),
    }
}

fn check_vector(b: &Tensor, len: usize, name: &str) -> Result<()> {
    if b.shape() != [len] {
        return Err(Error::shape(format!("{name} has shape {:?}, expected [{len}]", b.shape())));
    }
    Ok(())
}

/// `y = x W + b`, broadcast over every leading axis of `x`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let inp = x.last_dim();
    let out = check_matrix(w, inp, "W")?;
    check_vector(b, out, "b")?;
    let rows = x.len() / inp.max(1);
    let y = affine(x.data(), rows, inp, w.data(), b.data(), out);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().ok_or_else(|| Error::shape("linear needs at least one axis"))? = out;
    Tensor::new(shape, y)
}

/// Normalizes over the last axis, then applies `gain` and `bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.last_dim();
    if d < 2 {
        return Err(Error::shape("layer_norm needs a last axis of at least 2"));
    }
    check_vector(gain, d, "gain")?;
    check_vector(bias, d, "bias")?;
    let (y, _) = ln_forward(x.data(), x.len() / d, d, gain.data(), bias.data(), eps);
    Tensor::new(x.shape().to_vec(), y)
}

/// Query, key, value and output projections, each `[d_model, d_model]` plus bias.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

fn batch_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, t, d] => Ok((b, t, d)),
        _ => Err(Error::shape(format!("expected [B, T, D], got {:?}", x.shape()))),
    }
}

/// Scaled dot-product multi-head self-attention with a causal mask.
pub fn causal_mhsa(x: &Tensor, p: &AttentionParams<'_>, n_heads: usize) -> Result<Tensor> {
    let (b, t, d) = batch_dims(x)?;
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::shape("d_model not divisible by n_heads"));
    }
    for (w, bias, name) in [(p.wq, p.bq, "wq"), (p.wk, p.bk, "wk"), (p.wv, p.bv, "wv"), (p.wo, p.bo, "wo")] {
        if check_matrix(w, d, name)? != d {
            return Err(Error::shape(format!("{name} must be [{d}, {d}]")));
        }
        check_vector(bias, d, name)?;
    }
    let w = AttnWeights {
        wq: p.wq.data(),
        bq: p.bq.data(),
        wk: p.wk.data(),
        bk: p.bk.data(),
        wv: p.wv.data(),
        bv: p.bv.data(),
        wo: p.wo.data(),
        bo: p.bo.data(),
    };
    let mut out = Vec::with_capacity(x.len());
    for s in 0..b {
        let (y, _) = attn_forward(&w, &x.data()[s * t * d..(s + 1) * t * d], t, d, n_heads);
        out.extend(y);
    }
    Tensor::new(vec![b, t, d], out)
}

/// `w1: [d_model, hidden]`, `w2: [hidden, d_model]`.
#[derive(Debug, Clone, Copy)]
pub struct FfnParams<'a> {
    pub w1: &'a Tensor,
    pub b1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b2: &'a Tensor,
}

/// Position-wise feed-forward block: linear, ReLU, linear.
pub fn ffn(x: &Tensor, p: &FfnParams<'_>) -> Result<Tensor> {
    let (b, t, d) = batch_dims(x)?;
    let hidden = check_matrix(p.w1, d, "w1")?;
    check_vector(p.b1, hidden, "b1")?;
    if check_matrix(p.w2, hidden, "w2")? != d {
        return Err(Error::shape(format!("w2 must be [{hidden}, {d}]")));
    }
    check_vector(p.b2, d, "b2")?;
    let w = MlpWeights {
        w1: p.w1.data(),
        b1: p.b1.data(),
        w2: p.w2.data(),
        b2: p.b2.data(),
        inp: d,
        hidden,
        out: d,
    };
    let (y, _) = mlp_forward(&w, x.data(), b * t);
    Tensor::new(vec![b, t, d], y)
}
