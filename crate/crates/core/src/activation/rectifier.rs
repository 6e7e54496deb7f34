//! ReLU, leaky ReLU and parametric ReLU.

use super::{channel_spans, ActGradBundle};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.map_unary(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient is `1{x > 0}`; zero at the kink. The negative side is `g * 0`
/// so signed zeros match the leaky and parametric forms with slope 0.
pub fn relu_input_grad<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(upstream, |v, g| if v > T::zero() { g } else { g * T::zero() })
}

fn check_slope<T: Scalar>(slope: T) -> Result<()> {
    if slope > T::zero() && slope < T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "leaky ReLU slope must lie in (0, 1), got {slope}"
        )))
    }
}

/// `x` for `x > 0`, `slope * x` otherwise. `slope` must lie in `(0, 1)`.
pub fn lrelu_forward<T: Scalar>(x: &Tensor<T>, slope: T) -> Result<Tensor<T>> {
    check_slope(slope)?;
    x.map_unary(|v| if v > T::zero() { v } else { slope * v })
}

pub fn lrelu_input_grad<T: Scalar>(x: &Tensor<T>, slope: T, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    check_slope(slope)?;
    x.zip_map(upstream, |v, g| if v > T::zero() { g } else { g * slope })
}

/// Learnable per-channel negative slope.
#[derive(Clone, Debug, PartialEq)]
pub struct PReluParams<T> {
    pub a: Tensor<T>,
}

impl<T: Scalar> PReluParams<T> {
    pub fn new(channels: usize, init: T) -> Self {
        PReluParams {
            a: Tensor::full(&[channels], init),
        }
    }

    pub fn from_values(a: &[T]) -> Self {
        PReluParams { a: Tensor::vector(a) }
    }

    pub fn channels(&self) -> usize {
        self.a.len()
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
}

pub fn prelu_forward<T: Scalar>(x: &Tensor<T>, p: &PReluParams<T>) -> Result<Tensor<T>> {
    let dims = p.check_input(x, "prelu_forward")?;
    let mut out = x.clone();
    let data = out.data_mut();
    for (c, span) in channel_spans(dims) {
        let a = p.a.data()[c];
        for v in &mut data[span] {
            if *v <= T::zero() {
                *v = a * *v;
            }
        }
    }
    out.check_finite("prelu_forward")?;
    Ok(out)
}

/// `d_params = [d_a]`, summed over each channel's positions.
pub fn prelu_grads<T: Scalar>(x: &Tensor<T>, p: &PReluParams<T>, upstream: &Tensor<T>) -> Result<ActGradBundle<T>> {
    let dims = p.check_input(x, "prelu_grads")?;
    x.ensure_shape(upstream, "prelu_grads")?;
    let xs = x.data();
    let up = upstream.data();
    let mut d_input = upstream.clone();
    let mut d_a = vec![T::zero(); dims[1]];
    {
        let di = d_input.data_mut();
        for (c, span) in channel_spans(dims) {
            let a = p.a.data()[c];
            for i in span {
                if xs[i] <= T::zero() {
                    di[i] = up[i] * a;
                    d_a[c] = d_a[c] + up[i] * xs[i];
                }
            }
        }
    }
    d_input.check_finite("prelu_grads")?;
    Ok(ActGradBundle {
        d_input,
        d_params: vec![Tensor::vector(&d_a)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[values.len()], values).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu_forward(&v(&[-2.0, 3.0, 0.0])).unwrap().data(), &[0.0, 3.0, 0.0]);
        let g = relu_input_grad(&v(&[-1.0, 0.0, 2.0]), &v(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn lrelu_examples() {
        let out = lrelu_forward(&v(&[-5.0, 5.0]), 0.2).unwrap();
        assert!((out.data()[0] + 1.0).abs() < 1e-15);
        assert_eq!(out.data()[1], 5.0);
        assert!(lrelu_forward(&v(&[1.0]), 1.5).is_err());
        assert!(lrelu_forward(&v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn prelu_examples() {
        let p = PReluParams::from_values(&[0.25]);
        let x = Tensor::from_f64(&[1, 1, 1, 1], &[-2.0]).unwrap();
        assert_eq!(prelu_forward(&x, &p).unwrap().data(), &[-0.5]);
        let one = Tensor::full(&[1, 1, 1, 1], 1.0);
        let g = prelu_grads(&x, &p, &one).unwrap();
        assert_eq!(g.d_params[0].data(), &[-2.0]);
        assert_eq!(g.d_input.data(), &[0.25]);
        let pos = Tensor::from_f64(&[1, 1, 1, 1], &[4.0]).unwrap();
        let g = prelu_grads(&pos, &p, &one).unwrap();
        assert_eq!(g.d_params[0].data(), &[0.0]);
        assert_eq!(g.d_input.data(), &[1.0]);
    }

    #[test]
    fn prelu_da_matches_finite_difference() {
        let x = -2.0;
        let f = |a: f64| if x > 0.0 { x } else { a * x };
        let fd = (f(0.25 + 1e-6) - f(0.25 - 1e-6)) / 2e-6;
        assert!((fd + 2.0).abs() < 1e-8);
    }

    #[test]
    fn prelu_arity_mismatch() {
        let p = PReluParams::<f64>::new(3, 0.25);
        let x = Tensor::zeros(&[2, 2, 1, 1]);
        assert!(matches!(prelu_forward(&x, &p), Err(Error::ChannelMismatch { .. })));
    }
}
