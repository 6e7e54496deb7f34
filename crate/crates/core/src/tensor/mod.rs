//! Dense NCHW tensors.
//!
//! Tensors are row-major with the canonical axis order batch, channel, height,
//! width. Lower-rank tensors are read as if padded with trailing size-1 axes,
//! so a `[N, F]` dense activation is `F` channels of a 1x1 map. Ops never
//! broadcast implicitly; the only broadcast is [`Tensor::broadcast_per_channel`].

mod rng;
mod scalar;

pub use rng::{Rng, RngState};
pub use scalar::{DType, Scalar};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Rank-1 tensor over `values`.
    pub fn vector(values: &[T]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| T::cast(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Shape as `[N, C, H, W]`, padding missing trailing axes with 1.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        if self.shape.len() > 4 {
            return Err(Error::invalid(format!(
                "rank {} tensor has no NCHW view",
                self.shape.len()
            )));
        }
        let mut d = [1usize; 4];
        d[..self.shape.len()].copy_from_slice(&self.shape);
        Ok(d)
    }

    /// Channel extent of the NCHW view.
    pub fn channels(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                expected: self.shape,
                actual: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn ensure_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            })
        }
    }

    pub fn map_unary(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let out = Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        };
        out.check_finite("map_unary")?;
        Ok(out)
    }

    /// Elementwise binary op over two tensors of identical shape.
    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_shape(other, "zip_map")?;
        let out = Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        };
        out.check_finite("zip_map")?;
        Ok(out)
    }

    /// `out[n,c,h,w] = f(self[n,c,h,w], v[c])`.
    pub fn broadcast_per_channel(&self, v: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let [n, c, h, w] = self.dims4()?;
        if v.len() != c {
            return Err(Error::ChannelMismatch {
                op: "broadcast_per_channel",
                expected: c,
                actual: v.len(),
            });
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(self.data.len());
        for b in 0..n {
            for (ch, &p) in v.data.iter().enumerate() {
                let base = (b * c + ch) * plane;
                data.extend(self.data[base..base + plane].iter().map(|&x| f(x, p)));
            }
        }
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.check_finite("broadcast_per_channel")?;
        Ok(out)
    }

    /// Folds `f` over every `(n, h, w)` position of each channel, starting from
    /// `identity`. The fold order is fixed: batch-major, then spatial.
    pub fn reduce_per_channel(&self, identity: T, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.dims4()?;
        let plane = h * w;
        let mut out = vec![identity; c];
        for b in 0..n {
            for (ch, acc) in out.iter_mut().enumerate() {
                let base = (b * c + ch) * plane;
                for &x in &self.data[base..base + plane] {
                    *acc = f(*acc, x);
                }
            }
        }
        Ok(Tensor {
            shape: vec![c],
            data: out,
        })
    }

    /// Sequential left-to-right sum.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            T::zero()
        } else {
            self.sum() / T::cast(self.data.len() as f64)
        }
    }

    /// Rows `indices` of the leading axis, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let rows = self.shape.first().copied().unwrap_or(0);
        let stride = self.data.len().checked_div(rows).unwrap_or(0);
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= rows {
                return Err(Error::invalid(format!("row {i} out of range for {rows} rows")));
            }
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let mut shape = self.shape.clone();
        if let Some(first) = shape.first_mut() {
            *first = indices.len();
        }
        Ok(Tensor { shape, data })
    }

    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("rand_uniform needs lo < hi, got [{lo}, {hi})")));
        }
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::cast(rng.uniform(lo, hi))).collect();
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn rand_gauss(shape: &[usize], mean: f64, std: f64, rng: &mut Rng) -> Result<Self> {
        if !(std >= 0.0) || !mean.is_finite() {
            return Err(Error::invalid(format!("rand_gauss needs std >= 0, got {std}")));
        }
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::cast(mean + std * rng.standard_normal())).collect();
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Same values in the other precision.
    pub fn convert<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::cast(v.as_f64())).collect(),
        }
    }
}
