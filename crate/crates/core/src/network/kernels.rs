//! Loop-based layer kernels. Convolution unrolls each sample into patch rows
//! but keeps the textbook summation order, so the forward pass agrees exactly
//! with a brute-force reference.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `y[n, o] = b[o] + sum_i w[o, i] * x[n, i]` with `w: [out, in]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (outputs, inputs) = (weight.shape()[0], weight.shape()[1]);
    let n = check_rows(x, inputs, "dense_forward")?;
    let (xs, ws, bs) = (x.data(), weight.data(), bias.data());
    let mut out = Vec::with_capacity(n * outputs);
    for b in 0..n {
        let row = &xs[b * inputs..(b + 1) * inputs];
        for o in 0..outputs {
            let wr = &ws[o * inputs..(o + 1) * inputs];
            let mut acc = bs[o];
            for (w, v) in wr.iter().zip(row) {
                acc = acc + *w * *v;
            }
            out.push(acc);
        }
    }
    Tensor::from_vec(&[n, outputs], out)
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (outputs, inputs) = (weight.shape()[0], weight.shape()[1]);
    let n = check_rows(x, inputs, "dense_backward")?;
    if upstream.len() != n * outputs {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            expected: vec![n, outputs],
            actual: upstream.shape().to_vec(),
        });
    }
    let (xs, ws, up) = (x.data(), weight.data(), upstream.data());
    let mut dx = vec![T::zero(); n * inputs];
    let mut dw = vec![T::zero(); outputs * inputs];
    let mut db = vec![T::zero(); outputs];
    for b in 0..n {
        let row = &xs[b * inputs..(b + 1) * inputs];
        let drow = &mut dx[b * inputs..(b + 1) * inputs];
        for o in 0..outputs {
            let g = up[b * outputs + o];
            db[o] = db[o] + g;
            let wr = &ws[o * inputs..(o + 1) * inputs];
            let dwr = &mut dw[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                dwr[i] = dwr[i] + g * row[i];
                drow[i] = drow[i] + g * wr[i];
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(weight.shape(), dw)?,
        Tensor::from_vec(&[outputs], db)?,
    ))
}

fn check_rows<T: Scalar>(x: &Tensor<T>, inputs: usize, op: &'static str) -> Result<usize> {
    let n = x.shape().first().copied().unwrap_or(0);
    if n * inputs != x.len() {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![n, inputs],
            actual: x.shape().to_vec(),
        });
    }
    Ok(n)
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let [n, ci, h, w] = x.dims4()?;
        let ws = weight.shape();
        if ws.len() != 4 || ws[1] != ci || ws[2] != ws[3] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: vec![ws.first().copied().unwrap_or(0), ci, 0, 0],
                actual: ws.to_vec(),
            });
        }
        let (co, k) = (ws[0], ws[2]);
        if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::invalid(format!(
                "conv2d: kernel {k} does not fit {h}x{w} (pad {pad})"
            )));
        }
        Ok(ConvGeom {
            n,
            ci,
            h,
            w,
            co,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        })
    }

    /// Output positions `(oy, ix)` pairs along one axis whose input coordinate
    /// `o * stride + kk - pad` lies inside `[0, size)`.
    #[inline]
    fn valid(&self, kk: usize, out: usize, size: usize) -> std::ops::Range<usize> {
        // o * stride + kk >= pad  and  o * stride + kk - pad < size
        let lo = if kk >= self.pad {
            0
        } else {
            (self.pad - kk).div_ceil(self.stride)
        };
        let hi = if size + self.pad > kk {
            ((size + self.pad - kk - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        lo..hi.max(lo)
    }
}

/// Unrolls one sample into `[in * k * k, oh * ow]` patch rows; padded taps are zero.
fn im2col<T: Scalar>(g: &ConvGeom, src: &[T], cols: &mut [T]) {
    let plane = g.oh * g.ow;
    for i in 0..g.ci {
        let chan = &src[i * g.h * g.w..(i + 1) * g.h * g.w];
        for ky in 0..g.k {
            let rows = g.valid(ky, g.oh, g.h);
            for kx in 0..g.k {
                let cols_x = g.valid(kx, g.ow, g.w);
                let r = (i * g.k + ky) * g.k + kx;
                let dst = &mut cols[r * plane..(r + 1) * plane];
                dst.fill(T::zero());
                for oy in rows.clone() {
                    let iy = oy * g.stride + ky - g.pad;
                    let srow = &chan[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    for ox in cols_x.clone() {
                        drow[ox] = srow[ox * g.stride + kx - g.pad];
                    }
                }
            }
        }
    }
}

/// Inverse scatter of [`im2col`]: adds patch gradients back onto the input.
fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], dst: &mut [T]) {
    let plane = g.oh * g.ow;
    for i in 0..g.ci {
        let chan = &mut dst[i * g.h * g.w..(i + 1) * g.h * g.w];
        for ky in 0..g.k {
            let rows = g.valid(ky, g.oh, g.h);
            for kx in 0..g.k {
                let cols_x = g.valid(kx, g.ow, g.w);
                let r = (i * g.k + ky) * g.k + kx;
                let src = &cols[r * plane..(r + 1) * plane];
                for oy in rows.clone() {
                    let iy = oy * g.stride + ky - g.pad;
                    let srow = &src[oy * g.ow..(oy + 1) * g.ow];
                    let drow = &mut chan[iy * g.w..(iy + 1) * g.w];
                    for ox in cols_x.clone() {
                        let ix = ox * g.stride + kx - g.pad;
                        drow[ix] = drow[ix] + srow[ox];
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], a: T, x: &[T]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d = *d + a * v;
    }
}

/// Dot product with eight interleaved partial sums so it vectorises.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] = lanes[l] + x[l] * y[l];
        }
    }
    let mut acc = lanes.iter().fold(T::zero(), |s, &v| s + v);
    for (x, y) in ra.iter().zip(rb) {
        acc = acc + *x * *y;
    }
    acc
}

/// Cross-correlation `y[n,o,y,x] = b[o] + sum w[o,i,ky,kx] * x[n,i,y*s+ky-p,x*s+kx-p]`,
/// with zero padding. `weight: [out, in, k, k]`.
///
/// Each output accumulates the bias first, then taps in `(i, ky, kx)` order.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x, weight, stride, pad)?;
    let (xs, ws, bs) = (x.data(), weight.data(), bias.data());
    let plane = g.oh * g.ow;
    let taps = g.ci * g.k * g.k;
    let mut cols = vec![T::zero(); taps * plane];
    let mut out = vec![T::zero(); g.n * g.co * plane];
    for b in 0..g.n {
        im2col(&g, &xs[b * g.ci * g.h * g.w..(b + 1) * g.ci * g.h * g.w], &mut cols);
        for o in 0..g.co {
            let dst = &mut out[(b * g.co + o) * plane..(b * g.co + o + 1) * plane];
            dst.fill(bs[o]);
            for (r, &wv) in ws[o * taps..(o + 1) * taps].iter().enumerate() {
                axpy(dst, wv, &cols[r * plane..(r + 1) * plane]);
            }
        }
    }
    Tensor::from_vec(&[g.n, g.co, g.oh, g.ow], out)
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = ConvGeom::new(x, weight, stride, pad)?;
    let expected = [g.n, g.co, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            expected: expected.to_vec(),
            actual: upstream.shape().to_vec(),
        });
    }
    let (xs, ws, up) = (x.data(), weight.data(), upstream.data());
    let plane = g.oh * g.ow;
    let sample = g.ci * g.h * g.w;
    let taps = g.ci * g.k * g.k;
    let mut cols = vec![T::zero(); taps * plane];
    let mut dcols = vec![T::zero(); taps * plane];
    let mut dx = vec![T::zero(); xs.len()];
    let mut dw = vec![T::zero(); ws.len()];
    let mut db = vec![T::zero(); g.co];
    for b in 0..g.n {
        im2col(&g, &xs[b * sample..(b + 1) * sample], &mut cols);
        dcols.fill(T::zero());
        for o in 0..g.co {
            let grad = &up[(b * g.co + o) * plane..(b * g.co + o + 1) * plane];
            db[o] = grad.iter().fold(db[o], |acc, &v| acc + v);
            for r in 0..taps {
                let patch = &cols[r * plane..(r + 1) * plane];
                dw[o * taps + r] = dw[o * taps + r] + dot(grad, patch);
                axpy(&mut dcols[r * plane..(r + 1) * plane], ws[o * taps + r], grad);
            }
        }
        col2im(&g, &dcols, &mut dx[b * sample..(b + 1) * sample]);
    }
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(weight.shape(), dw)?,
        Tensor::from_vec(&[g.co], db)?,
    ))
}

/// Non-overlapping `size x size` max pooling. Returns the output and, for each
/// output element, the flat input index that won (first maximum in scan order).
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>, size: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.dims4()?;
    let (oh, ow) = (h / size, w / size);
    let xs = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_i = base + oy * size * w + ox * size;
                let mut best = xs[best_i];
                for ky in 0..size {
                    for kx in 0..size {
                        let i = base + (oy * size + ky) * w + ox * size + kx;
                        if xs[i] > best {
                            best = xs[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    Ok((Tensor::from_vec(&[n, c, oh, ow], out)?, arg))
}

pub fn maxpool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != upstream.len() {
        return Err(Error::invalid("maxpool_backward: argmax does not match upstream"));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        d[i] = d[i] + g;
    }
    Ok(dx)
}

pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let (oh, ow) = (h / size, w / size);
    let scale = T::one() / T::cast((size * size) as f64);
    let xs = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for ky in 0..size {
                    for kx in 0..size {
                        acc = acc + xs[base + (oy * size + ky) * w + ox * size + kx];
                    }
                }
                out.push(acc * scale);
            }
        }
    }
    Tensor::from_vec(&[n, c, oh, ow], out)
}

pub fn avgpool_backward<T: Scalar>(input_shape: &[usize], size: usize, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape);
    let [n, c, h, w] = dx.dims4()?;
    let (oh, ow) = (h / size, w / size);
    if upstream.len() != n * c * oh * ow {
        return Err(Error::ShapeMismatch {
            op: "avgpool_backward",
            expected: vec![n, c, oh, ow],
            actual: upstream.shape().to_vec(),
        });
    }
    let scale = T::one() / T::cast((size * size) as f64);
    let up = upstream.data();
    let d = dx.data_mut();
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = up[(nc * oh + oy) * ow + ox] * scale;
                for ky in 0..size {
                    for kx in 0..size {
                        d[base + (oy * size + ky) * w + ox * size + kx] = g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Softmax cross-entropy averaged over the batch.
#[derive(Clone, Debug)]
pub struct SoftmaxXent<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    /// `d loss / d logits`.
    pub d_logits: Tensor<T>,
}

/// `logits: [N, C]`, `labels[n] < C`. Uses max subtraction; the loss is
/// `logsumexp(z) - z[label]`, averaged over `N`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<SoftmaxXent<T>> {
    let n = labels.len();
    if n == 0 || !logits.len().is_multiple_of(n) || logits.shape()[0] != n {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent",
            expected: vec![n],
            actual: logits.shape().to_vec(),
        });
    }
    let c = logits.len() / n;
    let zs = logits.data();
    let inv_n = T::one() / T::cast(n as f64);
    let mut probs = Vec::with_capacity(n * c);
    let mut d = Vec::with_capacity(n * c);
    let mut total = T::zero();
    for (b, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::invalid(format!("label {label} out of range for {c} classes")));
        }
        let row = &zs[b * c..(b + 1) * c];
        let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let sum = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp());
        let lse = m + sum.ln();
        total = total + (lse - row[label]);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - m).exp() / sum;
            probs.push(p);
            let onehot = if j == label { T::one() } else { T::zero() };
            d.push((p - onehot) * inv_n);
        }
    }
    let loss = total * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "softmax_xent" });
    }
    Ok(SoftmaxXent {
        loss,
        probs: Tensor::from_vec(&[n, c], probs)?,
        d_logits: Tensor::from_vec(logits.shape(), d)?,
    })
}

/// Row-wise argmax (first maximum wins).
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let n = logits.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Vec::new();
    }
    let c = logits.len() / n;
    logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
