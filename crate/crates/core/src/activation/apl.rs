//! Adaptive piecewise linear unit: a ReLU plus `S` learnable hinges,
//! `h(x) = max(0, x) + sum_s a_s * max(0, -x + b_s)`.

use super::{channel_spans, ActGradBundle};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Hinge slopes `a` and offsets `b`, each of shape `[S, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AplParams<T> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> AplParams<T> {
    /// Zero slopes with offsets spread `0, 0.5, 1, ...`, so the unit starts as a
    /// ReLU and distinct hinges do not move in lockstep.
    pub fn new(hinges: usize, channels: usize) -> Result<Self> {
        if hinges == 0 {
            return Err(Error::invalid("APL needs at least one hinge"));
        }
        let b = (0..hinges)
            .flat_map(|s| std::iter::repeat_n(T::cast(0.5 * s as f64), channels))
            .collect();
        Ok(AplParams {
            a: Tensor::zeros(&[hinges, channels]),
            b: Tensor::from_vec(&[hinges, channels], b)?,
        })
    }

    pub fn from_values(hinges: usize, channels: usize, a: &[T], b: &[T]) -> Result<Self> {
        if hinges == 0 {
            return Err(Error::invalid("APL needs at least one hinge"));
        }
        Ok(AplParams {
            a: Tensor::from_vec(&[hinges, channels], a.to_vec())?,
            b: Tensor::from_vec(&[hinges, channels], b.to_vec())?,
        })
    }

    pub fn hinges(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.a.shape()[1]
    }

    fn check_input(&self, x: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
        let dims = x.dims4()?;
        if dims[1] != self.channels() {
            return Err(Error::ChannelMismatch {
                op,
                expected: self.channels(),
                actual: dims[1],
            });
        }
        Ok(dims)
    }

    #[inline]
    fn hinge(&self, s: usize, c: usize) -> (T, T) {
        let i = s * self.channels() + c;
        (self.a.data()[i], self.b.data()[i])
    }
}

pub fn apl_forward<T: Scalar>(x: &Tensor<T>, p: &AplParams<T>) -> Result<Tensor<T>> {
    let dims = p.check_input(x, "apl_forward")?;
    let mut out = x.clone();
    let data = out.data_mut();
    for (c, span) in channel_spans(dims) {
        for v in &mut data[span] {
            let x = *v;
            let mut y = x.max(T::zero());
            for s in 0..p.hinges() {
                let (a, b) = p.hinge(s, c);
                y = y + a * (b - x).max(T::zero());
            }
            *v = y;
        }
    }
    out.check_finite("apl_forward")?;
    Ok(out)
}

/// `d_params = [d_a, d_b]`, both `[S, C]`.
pub fn apl_grads<T: Scalar>(x: &Tensor<T>, p: &AplParams<T>, upstream: &Tensor<T>) -> Result<ActGradBundle<T>> {
    let dims = p.check_input(x, "apl_grads")?;
    x.ensure_shape(upstream, "apl_grads")?;
    let (hinges, channels) = (p.hinges(), p.channels());
    let xs = x.data();
    let up = upstream.data();
    let mut d_input = upstream.clone();
    let mut d_a = vec![T::zero(); hinges * channels];
    let mut d_b = vec![T::zero(); hinges * channels];
    {
        let di = d_input.data_mut();
        for (c, span) in channel_spans(dims) {
            for i in span {
                let x = xs[i];
                let mut slope = if x > T::zero() { T::one() } else { T::zero() };
                for s in 0..hinges {
                    let (a, b) = p.hinge(s, c);
                    let k = s * channels + c;
                    let arm = b - x;
                    if arm > T::zero() {
                        slope = slope - a;
                        d_a[k] = d_a[k] + up[i] * arm;
                        d_b[k] = d_b[k] + up[i] * a;
                    }
                }
                di[i] = up[i] * slope;
            }
        }
    }
    d_input.check_finite("apl_grads")?;
    Ok(ActGradBundle {
        d_input,
        d_params: vec![
            Tensor::from_vec(&[hinges, channels], d_a)?,
            Tensor::from_vec(&[hinges, channels], d_b)?,
        ],
    })
}
