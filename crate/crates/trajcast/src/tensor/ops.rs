//! Forward ops and their backward closures.

use rand::Rng;

use super::{Phase, Tape, Tensor};
use crate::error::{Error, Result};

/// Per-channel running mean/variance for batch normalization.
///
/// Fresh stats are (mean 0, variance 1), so an eval pass before any training
/// update normalizes against those defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Tape {
    fn register(&self, out: &Tensor, wants_grad: bool, pull: impl Fn(&[f64]) + 'static) {
        if self.is_recording() && wants_grad {
            out.set_requires_grad(true);
            self.record(out, pull);
        }
    }

    // ── binary elementwise ─────────────────────────────────────────────

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(shape_err("add", &sa, &sb));
        }
        let out = {
            let ad = a.inner.borrow();
            let bd = b.inner.borrow();
            let data = ad.data.iter().zip(&bd.data).map(|(x, y)| x + y).collect();
            Tensor::from_vec(&sa, data)?
        };
        let (ac, bc) = (a.clone(), b.clone());
        self.register(&out, a.requires_grad() || b.requires_grad(), move |g| {
            if ac.requires_grad() {
                ac.accumulate_grad(g);
            }
            if bc.requires_grad() {
                bc.accumulate_grad(g);
            }
        });
        Ok(out)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(shape_err("sub", &sa, &sb));
        }
        let out = {
            let ad = a.inner.borrow();
            let bd = b.inner.borrow();
            let data = ad.data.iter().zip(&bd.data).map(|(x, y)| x - y).collect();
            Tensor::from_vec(&sa, data)?
        };
        let (ac, bc) = (a.clone(), b.clone());
        self.register(&out, a.requires_grad() || b.requires_grad(), move |g| {
            if ac.requires_grad() {
                ac.accumulate_grad(g);
            }
            if bc.requires_grad() {
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                bc.accumulate_grad(&neg);
            }
        });
        Ok(out)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(shape_err("mul", &sa, &sb));
        }
        let out = {
            let ad = a.inner.borrow();
            let bd = b.inner.borrow();
            let data = ad.data.iter().zip(&bd.data).map(|(x, y)| x * y).collect();
            Tensor::from_vec(&sa, data)?
        };
        let (ac, bc) = (a.clone(), b.clone());
        self.register(&out, a.requires_grad() || b.requires_grad(), move |g| {
            if ac.requires_grad() {
                let delta: Vec<f64> = {
                    let bd = bc.inner.borrow();
                    g.iter().zip(&bd.data).map(|(gi, bi)| gi * bi).collect()
                };
                ac.accumulate_grad(&delta);
            }
            if bc.requires_grad() {
                let delta: Vec<f64> = {
                    let ad = ac.inner.borrow();
                    g.iter().zip(&ad.data).map(|(gi, ai)| gi * ai).collect()
                };
                bc.accumulate_grad(&delta);
            }
        });
        Ok(out)
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&self, x: &Tensor, k: f64) -> Result<Tensor> {
        let shape = x.shape();
        let out = {
            let xd = x.inner.borrow();
            Tensor::from_vec(&shape, xd.data.iter().map(|v| k * v).collect())?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = g.iter().map(|v| k * v).collect();
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    // ── unary pointwise ────────────────────────────────────────────────

    pub fn tanh(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let out = {
            let xd = x.inner.borrow();
            Tensor::from_vec(&shape, xd.data.iter().map(|v| v.tanh()).collect())?
        };
        let (xc, oc) = (x.clone(), out.clone());
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = {
                let od = oc.inner.borrow();
                g.iter()
                    .zip(&od.data)
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect()
            };
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        fn sig(v: f64) -> f64 {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        }
        let shape = x.shape();
        let out = {
            let xd = x.inner.borrow();
            Tensor::from_vec(&shape, xd.data.iter().map(|v| sig(*v)).collect())?
        };
        let (xc, oc) = (x.clone(), out.clone());
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = {
                let od = oc.inner.borrow();
                g.iter()
                    .zip(&od.data)
                    .map(|(gi, y)| gi * y * (1.0 - y))
                    .collect()
            };
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    pub fn relu(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let out = {
            let xd = x.inner.borrow();
            Tensor::from_vec(&shape, xd.data.iter().map(|v| v.max(0.0)).collect())?
        };
        let (xc, oc) = (x.clone(), out.clone());
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = {
                let od = oc.inner.borrow();
                g.iter()
                    .zip(&od.data)
                    .map(|(gi, y)| if *y > 0.0 { *gi } else { 0.0 })
                    .collect()
            };
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    /// Elementwise square root. The backward pass clamps the denominator so
    /// an exactly-zero input yields a zero (not infinite) chained gradient
    /// wherever the upstream path also vanishes.
    pub fn sqrt(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        {
            let xd = x.inner.borrow();
            if xd.data.iter().any(|v| *v < 0.0) {
                return Err(Error::Usage("sqrt of a negative value".into()));
            }
        }
        let out = {
            let xd = x.inner.borrow();
            Tensor::from_vec(&shape, xd.data.iter().map(|v| v.sqrt()).collect())?
        };
        let (xc, oc) = (x.clone(), out.clone());
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = {
                let od = oc.inner.borrow();
                g.iter()
                    .zip(&od.data)
                    .map(|(gi, y)| gi * 0.5 / y.max(1e-12))
                    .collect()
            };
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    // ── reductions ─────────────────────────────────────────────────────

    pub fn sum_all(&self, x: &Tensor) -> Result<Tensor> {
        let total: f64 = x.inner.borrow().data.iter().sum();
        let out = Tensor::scalar(total);
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let delta = vec![g[0]; xc.numel()];
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    /// Dot product with a constant weight vector, yielding a scalar.
    pub fn weighted_sum(&self, x: &Tensor, weights: &[f64]) -> Result<Tensor> {
        if weights.len() != x.numel() {
            return Err(shape_err("weighted_sum", &x.shape(), &[weights.len()]));
        }
        let total: f64 = {
            let xd = x.inner.borrow();
            xd.data.iter().zip(weights).map(|(v, w)| v * w).sum()
        };
        let out = Tensor::scalar(total);
        let xc = x.clone();
        let w = weights.to_vec();
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = w.iter().map(|wi| g[0] * wi).collect();
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    /// Sum adjacent pairs along the last axis: `[..., 2m] -> [..., m]`.
    pub fn sum_pairs(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let last = *shape
            .last()
            .ok_or_else(|| Error::Usage("sum_pairs requires at least one dimension".into()))?;
        if last % 2 != 0 {
            return Err(Error::Usage(format!(
                "sum_pairs requires an even trailing dimension, got {last}"
            )));
        }
        let mut new_shape = shape.clone();
        *new_shape.last_mut().unwrap() = last / 2;
        let out = {
            let xd = x.inner.borrow();
            let data: Vec<f64> = xd
                .data
                .chunks_exact(2)
                .map(|pair| pair[0] + pair[1])
                .collect();
            Tensor::from_vec(&new_shape, data)?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let mut delta = vec![0.0; xc.numel()];
            for (j, gj) in g.iter().enumerate() {
                delta[2 * j] = *gj;
                delta[2 * j + 1] = *gj;
            }
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    // ── matrix product ─────────────────────────────────────────────────

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let out = {
            let ad = a.inner.borrow();
            let bd = b.inner.borrow();
            let mut data = vec![0.0; m * p];
            for i in 0..m {
                for q in 0..k {
                    let aiq = ad.data[i * k + q];
                    if aiq == 0.0 {
                        continue;
                    }
                    let brow = &bd.data[q * p..(q + 1) * p];
                    let orow = &mut data[i * p..(i + 1) * p];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += aiq * bv;
                    }
                }
            }
            Tensor::from_vec(&[m, p], data)?
        };
        let (ac, bc) = (a.clone(), b.clone());
        self.register(&out, a.requires_grad() || b.requires_grad(), move |g| {
            if ac.requires_grad() {
                // da = g · bᵀ
                let delta: Vec<f64> = {
                    let bd = bc.inner.borrow();
                    let mut d = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..p {
                            let gij = g[i * p + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for q in 0..k {
                                d[i * k + q] += gij * bd.data[q * p + j];
                            }
                        }
                    }
                    d
                };
                ac.accumulate_grad(&delta);
            }
            if bc.requires_grad() {
                // db = aᵀ · g
                let delta: Vec<f64> = {
                    let ad = ac.inner.borrow();
                    let mut d = vec![0.0; k * p];
                    for i in 0..m {
                        for q in 0..k {
                            let aiq = ad.data[i * k + q];
                            if aiq == 0.0 {
                                continue;
                            }
                            for j in 0..p {
                                d[q * p + j] += aiq * g[i * p + j];
                            }
                        }
                    }
                    d
                };
                bc.accumulate_grad(&delta);
            }
        });
        Ok(out)
    }

    // ── shape utilities ────────────────────────────────────────────────

    pub fn reshape(&self, x: &Tensor, new_shape: &[usize]) -> Result<Tensor> {
        let numel: usize = new_shape.iter().product();
        if numel != x.numel() {
            return Err(shape_err("reshape", &x.shape(), new_shape));
        }
        let out = Tensor::from_vec(new_shape, x.value())?;
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            xc.accumulate_grad(g);
        });
        Ok(out)
    }

    /// Extract time slice `t` from `[n, T, c]`, yielding `[n, c]`.
    pub fn slice_time(&self, x: &Tensor, t: usize) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 3 || t >= shape[1] {
            return Err(Error::Usage(format!(
                "slice_time index {t} out of range for shape {shape:?}"
            )));
        }
        let (n, steps, c) = (shape[0], shape[1], shape[2]);
        let out = {
            let xd = x.inner.borrow();
            let mut data = Vec::with_capacity(n * c);
            for i in 0..n {
                let base = (i * steps + t) * c;
                data.extend_from_slice(&xd.data[base..base + c]);
            }
            Tensor::from_vec(&[n, c], data)?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let mut delta = vec![0.0; n * steps * c];
            for i in 0..n {
                let base = (i * steps + t) * c;
                delta[base..base + c].copy_from_slice(&g[i * c..(i + 1) * c]);
            }
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    /// Stack T slices of `[n, c]` back into `[n, T, c]`.
    pub fn stack_time(&self, slices: &[Tensor]) -> Result<Tensor> {
        if slices.is_empty() {
            return Err(Error::Usage("stack_time needs at least one slice".into()));
        }
        let first = slices[0].shape();
        if first.len() != 2 {
            return Err(Error::Usage(format!(
                "stack_time expects [n, c] slices, got {first:?}"
            )));
        }
        for s in slices {
            if s.shape() != first {
                return Err(shape_err("stack_time", &first, &s.shape()));
            }
        }
        let (n, c) = (first[0], first[1]);
        let steps = slices.len();
        let out = {
            let mut data = vec![0.0; n * steps * c];
            for (t, s) in slices.iter().enumerate() {
                let sd = s.inner.borrow();
                for i in 0..n {
                    let dst = (i * steps + t) * c;
                    data[dst..dst + c].copy_from_slice(&sd.data[i * c..(i + 1) * c]);
                }
            }
            Tensor::from_vec(&[n, steps, c], data)?
        };
        let wants = slices.iter().any(|s| s.requires_grad());
        let captured: Vec<Tensor> = slices.to_vec();
        self.register(&out, wants, move |g| {
            for (t, s) in captured.iter().enumerate() {
                if !s.requires_grad() {
                    continue;
                }
                let mut delta = vec![0.0; n * c];
                for i in 0..n {
                    let src = (i * steps + t) * c;
                    delta[i * c..(i + 1) * c].copy_from_slice(&g[src..src + c]);
                }
                s.accumulate_grad(&delta);
            }
        });
        Ok(out)
    }

    /// Zero-pad `[n, c]` to `[n_out, c]` rows.
    pub fn pad_rows(&self, x: &Tensor, n_out: usize) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 2 || n_out < shape[0] {
            return Err(Error::Usage(format!(
                "pad_rows to {n_out} invalid for shape {shape:?}"
            )));
        }
        let (n, c) = (shape[0], shape[1]);
        let out = {
            let xd = x.inner.borrow();
            let mut data = vec![0.0; n_out * c];
            data[..n * c].copy_from_slice(&xd.data);
            Tensor::from_vec(&[n_out, c], data)?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            xc.accumulate_grad(&g[..n * c]);
        });
        Ok(out)
    }

    /// Top-left `[n, n]` block of a square `[cap, cap]` matrix.
    pub fn slice_block(&self, x: &Tensor, n: usize) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 2 || shape[0] != shape[1] || n > shape[0] {
            return Err(Error::Usage(format!(
                "slice_block of size {n} invalid for shape {shape:?}"
            )));
        }
        let cap = shape[0];
        let out = {
            let xd = x.inner.borrow();
            let mut data = Vec::with_capacity(n * n);
            for i in 0..n {
                data.extend_from_slice(&xd.data[i * cap..i * cap + n]);
            }
            Tensor::from_vec(&[n, n], data)?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let mut delta = vec![0.0; cap * cap];
            for i in 0..n {
                delta[i * cap..i * cap + n].copy_from_slice(&g[i * n..(i + 1) * n]);
            }
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }

    // ── convolutions ───────────────────────────────────────────────────

    /// Pointwise channel remap: `[n, t, c_in] · [c_out, c_in] + [c_out]`.
    pub fn conv_channel_mix(&self, x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (sx, sw, sb) = (x.shape(), w.shape(), bias.shape());
        if sx.len() != 3 || sw.len() != 2 || sx[2] != sw[1] {
            return Err(shape_err("conv_channel_mix", &sx, &sw));
        }
        if sb != vec![sw[0]] {
            return Err(shape_err("conv_channel_mix bias", &sb, &[sw[0]]));
        }
        let (n, t, ci) = (sx[0], sx[1], sx[2]);
        let co = sw[0];
        let out = {
            let xd = x.inner.borrow();
            let wd = w.inner.borrow();
            let bd = bias.inner.borrow();
            let mut data = vec![0.0; n * t * co];
            for pos in 0..n * t {
                let xrow = &xd.data[pos * ci..(pos + 1) * ci];
                let orow = &mut data[pos * co..(pos + 1) * co];
                for (o, oval) in orow.iter_mut().enumerate() {
                    let wrow = &wd.data[o * ci..(o + 1) * ci];
                    let mut acc = bd.data[o];
                    for (xv, wv) in xrow.iter().zip(wrow) {
                        acc += xv * wv;
                    }
                    *oval = acc;
                }
            }
            Tensor::from_vec(&[n, t, co], data)?
        };
        let (xc, wc, bc) = (x.clone(), w.clone(), bias.clone());
        let wants = x.requires_grad() || w.requires_grad() || bias.requires_grad();
        self.register(&out, wants, move |g| {
            if xc.requires_grad() {
                let delta: Vec<f64> = {
                    let wd = wc.inner.borrow();
                    let mut d = vec![0.0; n * t * ci];
                    for pos in 0..n * t {
                        for o in 0..co {
                            let go = g[pos * co + o];
                            if go == 0.0 {
                                continue;
                            }
                            let wrow = &wd.data[o * ci..(o + 1) * ci];
                            let drow = &mut d[pos * ci..(pos + 1) * ci];
                            for (dv, wv) in drow.iter_mut().zip(wrow) {
                                *dv += go * wv;
                            }
                        }
                    }
                    d
                };
                xc.accumulate_grad(&delta);
            }
            if wc.requires_grad() {
                let delta: Vec<f64> = {
                    let xd = xc.inner.borrow();
                    let mut d = vec![0.0; co * ci];
                    for pos in 0..n * t {
                        let xrow = &xd.data[pos * ci..(pos + 1) * ci];
                        for o in 0..co {
                            let go = g[pos * co + o];
                            if go == 0.0 {
                                continue;
                            }
                            let drow = &mut d[o * ci..(o + 1) * ci];
                            for (dv, xv) in drow.iter_mut().zip(xrow) {
                                *dv += go * xv;
                            }
                        }
                    }
                    d
                };
                wc.accumulate_grad(&delta);
            }
            if bc.requires_grad() {
                let mut d = vec![0.0; co];
                for pos in 0..n * t {
                    for (o, dv) in d.iter_mut().enumerate() {
                        *dv += g[pos * co + o];
                    }
                }
                bc.accumulate_grad(&d);
            }
        });
        Ok(out)
    }

    /// Width-3 convolution along the time axis, independent per node:
    /// `[n, t, c] · [c_out, c, 3] + [c_out] -> [n, t', c_out]`.
    pub fn conv_temporal(
        &self,
        x: &Tensor,
        w: &Tensor,
        bias: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor> {
        let (sx, sw, sb) = (x.shape(), w.shape(), bias.shape());
        if sx.len() != 3 || sw.len() != 3 || sw[2] != 3 || sx[2] != sw[1] {
            return Err(shape_err("conv_temporal", &sx, &sw));
        }
        if sb != vec![sw[0]] {
            return Err(shape_err("conv_temporal bias", &sb, &[sw[0]]));
        }
        if stride == 0 {
            return Err(Error::Parameter("conv_temporal stride must be >= 1".into()));
        }
        let (n, t, c) = (sx[0], sx[1], sx[2]);
        let co = sw[0];
        if t + 2 * padding < 3 {
            return Err(Error::ShapeMismatch {
                op: "conv_temporal: padded length below kernel width",
                lhs: vec![t + 2 * padding],
                rhs: vec![3],
            });
        }
        let t_out = (t + 2 * padding - 3) / stride + 1;
        let out = {
            let xd = x.inner.borrow();
            let wd = w.inner.borrow();
            let bd = bias.inner.borrow();
            let mut data = vec![0.0; n * t_out * co];
            for i in 0..n {
                for u in 0..t_out {
                    for o in 0..co {
                        let mut acc = bd.data[o];
                        for k in 0..3usize {
                            let pos = (u * stride + k) as isize - padding as isize;
                            if pos < 0 || pos >= t as isize {
                                continue;
                            }
                            let pos = pos as usize;
                            for ch in 0..c {
                                acc +=
                                    xd.data[(i * t + pos) * c + ch] * wd.data[(o * c + ch) * 3 + k];
                            }
                        }
                        data[(i * t_out + u) * co + o] = acc;
                    }
                }
            }
            Tensor::from_vec(&[n, t_out, co], data)?
        };
        let (xc, wc, bc) = (x.clone(), w.clone(), bias.clone());
        let wants = x.requires_grad() || w.requires_grad() || bias.requires_grad();
        self.register(&out, wants, move |g| {
            if xc.requires_grad() {
                let delta: Vec<f64> = {
                    let wd = wc.inner.borrow();
                    let mut d = vec![0.0; n * t * c];
                    for i in 0..n {
                        for u in 0..t_out {
                            for o in 0..co {
                                let go = g[(i * t_out + u) * co + o];
                                if go == 0.0 {
                                    continue;
                                }
                                for k in 0..3usize {
                                    let pos = (u * stride + k) as isize - padding as isize;
                                    if pos < 0 || pos >= t as isize {
                                        continue;
                                    }
                                    let pos = pos as usize;
                                    for ch in 0..c {
                                        d[(i * t + pos) * c + ch] +=
                                            go * wd.data[(o * c + ch) * 3 + k];
                                    }
                                }
                            }
                        }
                    }
                    d
                };
                xc.accumulate_grad(&delta);
            }
            if wc.requires_grad() {
                let delta: Vec<f64> = {
                    let xd = xc.inner.borrow();
                    let mut d = vec![0.0; co * c * 3];
                    for i in 0..n {
                        for u in 0..t_out {
                            for o in 0..co {
                                let go = g[(i * t_out + u) * co + o];
                                if go == 0.0 {
                                    continue;
                                }
                                for k in 0..3usize {
                                    let pos = (u * stride + k) as isize - padding as isize;
                                    if pos < 0 || pos >= t as isize {
                                        continue;
                                    }
                                    let pos = pos as usize;
                                    for ch in 0..c {
                                        d[(o * c + ch) * 3 + k] +=
                                            go * xd.data[(i * t + pos) * c + ch];
                                    }
                                }
                            }
                        }
                    }
                    d
                };
                wc.accumulate_grad(&delta);
            }
            if bc.requires_grad() {
                let mut d = vec![0.0; co];
                for i in 0..n {
                    for u in 0..t_out {
                        for (o, dv) in d.iter_mut().enumerate() {
                            *dv += g[(i * t_out + u) * co + o];
                        }
                    }
                }
                bc.accumulate_grad(&d);
            }
        });
        Ok(out)
    }

    // ── batch normalization ────────────────────────────────────────────

    /// Per-channel normalization of `[b, n, t, c]`.
    ///
    /// Train phase normalizes with current batch statistics over `(b, n, t)`
    /// and updates `stats` by exponential moving average; eval phase
    /// normalizes with `stats` unchanged. Differentiable through the batch
    /// statistics in train phase.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &self,
        x: &Tensor,
        scale: &Tensor,
        shift: &Tensor,
        stats: &mut BatchNormStats,
        momentum: f64,
        eps: f64,
        phase: Phase,
    ) -> Result<Tensor> {
        let sx = x.shape();
        if sx.len() != 4 {
            return Err(Error::Usage(format!(
                "batch_norm expects [b, n, t, c], got {sx:?}"
            )));
        }
        let c = sx[3];
        if scale.shape() != vec![c] || shift.shape() != vec![c] {
            return Err(shape_err("batch_norm scale/shift", &scale.shape(), &[c]));
        }
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::Parameter(format!(
                "batch_norm running stats sized {} for {} channels",
                stats.mean.len(),
                c
            )));
        }
        let m = sx[0] * sx[1] * sx[2];
        if m == 0 {
            return Err(Error::Usage("batch_norm on an empty tensor".into()));
        }

        let (mean, var): (Vec<f64>, Vec<f64>) = match phase {
            Phase::Train => {
                let xd = x.inner.borrow();
                let mut mean = vec![0.0; c];
                for pos in 0..m {
                    for ch in 0..c {
                        mean[ch] += xd.data[pos * c + ch];
                    }
                }
                for v in mean.iter_mut() {
                    *v /= m as f64;
                }
                let mut var = vec![0.0; c];
                for pos in 0..m {
                    for ch in 0..c {
                        let d = xd.data[pos * c + ch] - mean[ch];
                        var[ch] += d * d;
                    }
                }
                for v in var.iter_mut() {
                    *v /= m as f64;
                }
                (mean, var)
            }
            Phase::Eval => (stats.mean.clone(), stats.var.clone()),
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = {
            let xd = x.inner.borrow();
            let gd = scale.inner.borrow();
            let bd = shift.inner.borrow();
            let mut xhat = vec![0.0; m * c];
            let mut data = vec![0.0; m * c];
            for pos in 0..m {
                for ch in 0..c {
                    let h = (xd.data[pos * c + ch] - mean[ch]) * inv_std[ch];
                    xhat[pos * c + ch] = h;
                    data[pos * c + ch] = gd.data[ch] * h + bd.data[ch];
                }
            }
            (xhat, Tensor::from_vec(&sx, data)?)
        };

        if phase == Phase::Train {
            for ch in 0..c {
                stats.mean[ch] = (1.0 - momentum) * stats.mean[ch] + momentum * mean[ch];
                stats.var[ch] = (1.0 - momentum) * stats.var[ch] + momentum * var[ch];
            }
        }

        let (xc, gc, bc) = (x.clone(), scale.clone(), shift.clone());
        let wants = x.requires_grad() || scale.requires_grad() || shift.requires_grad();
        let through_batch_stats = phase == Phase::Train;
        self.register(&out, wants, move |g| {
            // dβ and dγ common to both phases.
            if bc.requires_grad() {
                let mut d = vec![0.0; c];
                for pos in 0..m {
                    for ch in 0..c {
                        d[ch] += g[pos * c + ch];
                    }
                }
                bc.accumulate_grad(&d);
            }
            if gc.requires_grad() {
                let mut d = vec![0.0; c];
                for pos in 0..m {
                    for ch in 0..c {
                        d[ch] += g[pos * c + ch] * xhat[pos * c + ch];
                    }
                }
                gc.accumulate_grad(&d);
            }
            if xc.requires_grad() {
                let gd = gc.inner.borrow();
                let delta: Vec<f64> = if through_batch_stats {
                    // Full backward through batch mean and variance.
                    let mut sum_dxh = vec![0.0; c];
                    let mut sum_dxh_xh = vec![0.0; c];
                    for pos in 0..m {
                        for ch in 0..c {
                            let dxh = g[pos * c + ch] * gd.data[ch];
                            sum_dxh[ch] += dxh;
                            sum_dxh_xh[ch] += dxh * xhat[pos * c + ch];
                        }
                    }
                    let mf = m as f64;
                    let mut d = vec![0.0; m * c];
                    for pos in 0..m {
                        for ch in 0..c {
                            let dxh = g[pos * c + ch] * gd.data[ch];
                            d[pos * c + ch] = inv_std[ch] / mf
                                * (mf * dxh - sum_dxh[ch] - xhat[pos * c + ch] * sum_dxh_xh[ch]);
                        }
                    }
                    d
                } else {
                    let mut d = vec![0.0; m * c];
                    for pos in 0..m {
                        for ch in 0..c {
                            d[pos * c + ch] = g[pos * c + ch] * gd.data[ch] * inv_std[ch];
                        }
                    }
                    d
                };
                drop(gd);
                xc.accumulate_grad(&delta);
            }
        });
        Ok(out)
    }

    // ── dropout ────────────────────────────────────────────────────────

    /// Inverted dropout: train phase zeroes each element with probability
    /// `p` and scales survivors by `1/(1-p)`; eval phase is the identity.
    pub fn dropout<R: Rng>(&self, x: &Tensor, p: f64, phase: Phase, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        let shape = x.shape();
        let mask: Option<Vec<f64>> = match phase {
            Phase::Eval => None,
            Phase::Train => {
                let keep = 1.0 / (1.0 - p);
                Some(
                    (0..x.numel())
                        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                        .collect(),
                )
            }
        };
        let out = {
            let xd = x.inner.borrow();
            let data = match &mask {
                None => xd.data.clone(),
                Some(mask) => xd.data.iter().zip(mask).map(|(v, m)| v * m).collect(),
            };
            Tensor::from_vec(&shape, data)?
        };
        let xc = x.clone();
        self.register(&out, x.requires_grad(), move |g| {
            let delta: Vec<f64> = match &mask {
                None => g.to_vec(),
                Some(mask) => g.iter().zip(mask).map(|(gi, m)| gi * m).collect(),
            };
            xc.accumulate_grad(&delta);
        });
        Ok(out)
    }
}
