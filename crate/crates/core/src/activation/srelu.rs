//! S-shaped rectified linear unit.
//!
//! Each unit is three lines joined at two thresholds:
//!
//! ```text
//!          t_r + a_r (x - t_r)   x >= t_r
//! h(x) =   x                     t_l < x < t_r
//!          t_l + a_l (x - t_l)   x <= t_l
//! ```
//!
//! The branches are tested in that order. Parameters are unconstrained, so
//! `t_l > t_r` is legal; the right test then claims every `x >= t_r` before
//! the left test is reached. Forward, input gradient and parameter gradients
//! all go through [`SReluUnit::segment`] so they agree on every input.
//!
//! The right line is evaluated as `x + (a_r - 1)(x - t_r)`, the same line
//! rearranged so that `a_r = 1` returns `x` bit for bit whatever `t_r` is.

use super::{channel_spans, ActGradBundle};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SReluVariant {
    /// One parameter quadruple per channel.
    ChannelWise,
    /// One quadruple for the whole layer.
    ChannelShared,
}

/// Which line of the unit an input falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Right,
    Middle,
    Left,
}

/// Parameters of a single unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SReluUnit<T> {
    pub t_r: T,
    pub a_r: T,
    pub t_l: T,
    pub a_l: T,
}

impl<T: Scalar> SReluUnit<T> {
    pub fn new(t_r: T, a_r: T, t_l: T, a_l: T) -> Self {
        SReluUnit { t_r, a_r, t_l, a_l }
    }

    #[inline]
    pub fn segment(&self, x: T) -> Segment {
        if x >= self.t_r {
            Segment::Right
        } else if x <= self.t_l {
            Segment::Left
        } else {
            Segment::Middle
        }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self.segment(x) {
            Segment::Right => x + (self.a_r - T::one()) * (x - self.t_r),
            Segment::Middle => x,
            Segment::Left => self.t_l + self.a_l * (x - self.t_l),
        }
    }

    /// dh/dx. At a threshold the outer line's slope is used.
    #[inline]
    pub fn slope(&self, x: T) -> T {
        match self.segment(x) {
            Segment::Right => self.a_r,
            Segment::Middle => T::one(),
            Segment::Left => self.a_l,
        }
    }

    /// `[dh/dt_r, dh/da_r, dh/dt_l, dh/da_l]` at `x`.
    #[inline]
    pub fn param_partials(&self, x: T) -> [T; 4] {
        let z = T::zero();
        match self.segment(x) {
            Segment::Right => [T::one() - self.a_r, x - self.t_r, z, z],
            Segment::Middle => [z; 4],
            Segment::Left => [z, z, T::one() - self.a_l, x - self.t_l],
        }
    }
}

/// Learnable parameters of one SReLU layer.
///
/// The four tensors have shape `[C]` for [`SReluVariant::ChannelWise`] and
/// `[1]` for [`SReluVariant::ChannelShared`]. Any finite values are accepted.
#[derive(Clone, Debug, PartialEq)]
pub struct SReluParams<T> {
    pub t_r: Tensor<T>,
    pub a_r: Tensor<T>,
    pub t_l: Tensor<T>,
    pub a_l: Tensor<T>,
    pub variant: SReluVariant,
    /// Frozen parameters receive gradients but are never updated.
    pub frozen: bool,
}

impl<T: Scalar> SReluParams<T> {
    /// Every unit set to `unit`.
    pub fn uniform(variant: SReluVariant, channels: usize, unit: SReluUnit<T>) -> Self {
        let n = match variant {
            SReluVariant::ChannelWise => channels,
            SReluVariant::ChannelShared => 1,
        };
        SReluParams {
            t_r: Tensor::full(&[n], unit.t_r),
            a_r: Tensor::full(&[n], unit.a_r),
            t_l: Tensor::full(&[n], unit.t_l),
            a_l: Tensor::full(&[n], unit.a_l),
            variant,
            frozen: false,
        }
    }

    /// `{t_tilde, 1, 0, a_tilde}`: identity on the right, LReLU(a_tilde) on the left.
    pub fn adaptive_init(variant: SReluVariant, channels: usize, t_tilde: T, a_tilde: T) -> Self {
        Self::uniform(variant, channels, SReluUnit::new(t_tilde, T::one(), T::zero(), a_tilde))
    }

    pub fn from_values(variant: SReluVariant, t_r: &[T], a_r: &[T], t_l: &[T], a_l: &[T]) -> Result<Self> {
        let n = t_r.len();
        if [a_r.len(), t_l.len(), a_l.len()].iter().any(|&l| l != n) {
            return Err(Error::invalid("SReLU parameter vectors differ in length"));
        }
        if n == 0 || (variant == SReluVariant::ChannelShared && n != 1) {
            return Err(Error::invalid(format!("{variant:?} SReLU cannot hold {n} units")));
        }
        let p = SReluParams {
            t_r: Tensor::vector(t_r),
            a_r: Tensor::vector(a_r),
            t_l: Tensor::vector(t_l),
            a_l: Tensor::vector(a_l),
            variant,
            frozen: false,
        };
        p.check_finite()?;
        Ok(p)
    }

    /// Number of stored units (C or 1).
    pub fn arity(&self) -> usize {
        self.t_r.len()
    }

    pub fn param_count(&self) -> usize {
        4 * self.arity()
    }

    /// Parameters applied to channel `c`.
    #[inline]
    pub fn unit(&self, c: usize) -> SReluUnit<T> {
        let i = match self.variant {
            SReluVariant::ChannelWise => c,
            SReluVariant::ChannelShared => 0,
        };
        SReluUnit {
            t_r: self.t_r.data()[i],
            a_r: self.a_r.data()[i],
            t_l: self.t_l.data()[i],
            a_l: self.a_l.data()[i],
        }
    }

    /// `[t_r, a_r, t_l, a_l]`.
    pub fn tensors(&self) -> [&Tensor<T>; 4] {
        [&self.t_r, &self.a_r, &self.t_l, &self.a_l]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 4] {
        [&mut self.t_r, &mut self.a_r, &mut self.t_l, &mut self.a_l]
    }

    fn check_finite(&self) -> Result<()> {
        for t in self.tensors() {
            t.check_finite("srelu params")?;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
        let dims = x.dims4()?;
        if self.variant == SReluVariant::ChannelWise && self.arity() != dims[1] {
            return Err(Error::ChannelMismatch {
                op,
                expected: self.arity(),
                actual: dims[1],
            });
        }
        Ok(dims)
    }
}

pub fn srelu_forward<T: Scalar>(x: &Tensor<T>, p: &SReluParams<T>) -> Result<Tensor<T>> {
    let dims = p.check_input(x, "srelu_forward")?;
    let mut out = x.clone();
    let data = out.data_mut();
    for (c, span) in channel_spans(dims) {
        let unit = p.unit(c);
        for v in &mut data[span] {
            *v = unit.eval(*v);
        }
    }
    out.check_finite("srelu_forward")?;
    Ok(out)
}

/// `upstream * dh/dx`.
pub fn srelu_input_grad<T: Scalar>(x: &Tensor<T>, p: &SReluParams<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = p.check_input(x, "srelu_input_grad")?;
    x.ensure_shape(upstream, "srelu_input_grad")?;
    let mut out = upstream.clone();
    let xs = x.data();
    let data = out.data_mut();
    for (c, span) in channel_spans(dims) {
        let unit = p.unit(c);
        for (d, &x) in data[span.clone()].iter_mut().zip(&xs[span]) {
            let s = if x >= unit.t_r {
                unit.a_r
            } else if x <= unit.t_l {
                unit.a_l
            } else {
                T::one()
            };
            *d = *d * s;
        }
    }
    out.check_finite("srelu_input_grad")?;
    Ok(out)
}

/// Gradients of `sum(upstream * h(x))` with respect to `[t_r, a_r, t_l, a_l]`.
///
/// Channel-wise: summed over every batch and spatial position of the channel.
/// Channel-shared: the per-channel sums are further summed over channels, in
/// channel order.
pub fn srelu_param_grads<T: Scalar>(x: &Tensor<T>, p: &SReluParams<T>, upstream: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let dims = p.check_input(x, "srelu_param_grads")?;
    x.ensure_shape(upstream, "srelu_param_grads")?;
    let per_channel = accumulate_param_grads(x, p, upstream, dims);
    Ok(collapse_param_grads(per_channel, p))
}

/// Input and parameter gradients in one pass.
pub fn srelu_backward<T: Scalar>(x: &Tensor<T>, p: &SReluParams<T>, upstream: &Tensor<T>) -> Result<ActGradBundle<T>> {
    let d_input = srelu_input_grad(x, p, upstream)?;
    let d_params = srelu_param_grads(x, p, upstream)?;
    Ok(ActGradBundle { d_input, d_params })
}

fn accumulate_param_grads<T: Scalar>(
    x: &Tensor<T>,
    p: &SReluParams<T>,
    upstream: &Tensor<T>,
    dims: [usize; 4],
) -> Vec<[T; 4]> {
    let xs = x.data();
    let up = upstream.data();
    let mut acc = vec![[T::zero(); 4]; dims[1]];
    for (c, span) in channel_spans(dims) {
        let unit = p.unit(c);
        let mut a = acc[c];
        let (one, zero) = (T::one(), T::zero());
        for (&x, &g) in xs[span.clone()].iter().zip(&up[span]) {
            // Same values as `param_partials`, written as selects so random
            // inputs do not stall on mispredicted branches.
            let right = x >= unit.t_r;
            let left = !right && x <= unit.t_l;
            let p = [
                if right { one - unit.a_r } else { zero },
                if right { x - unit.t_r } else { zero },
                if left { one - unit.a_l } else { zero },
                if left { x - unit.t_l } else { zero },
            ];
            for k in 0..4 {
                a[k] = a[k] + g * p[k];
            }
        }
        acc[c] = a;
    }
    acc
}

fn collapse_param_grads<T: Scalar>(per_channel: Vec<[T; 4]>, p: &SReluParams<T>) -> Vec<Tensor<T>> {
    match p.variant {
        SReluVariant::ChannelWise => (0..4)
            .map(|k| Tensor::vector(&per_channel.iter().map(|g| g[k]).collect::<Vec<_>>()))
            .collect(),
        SReluVariant::ChannelShared => (0..4)
            .map(|k| {
                let total = per_channel.iter().fold(T::zero(), |s, g| s + g[k]);
                Tensor::vector(&[total])
            })
            .collect(),
    }
}
