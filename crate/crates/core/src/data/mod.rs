//! Datasets: MNIST IDX and CIFAR-10 binary loaders, per-channel mean
//! subtraction, seeded validation splits and synthetic regression sets.

mod cifar;
mod mnist;
mod synthetic;

pub use cifar::{load_cifar10, CIFAR_RECORD_LEN};
pub use mnist::{load_mnist, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use synthetic::{
    gen_synthetic, read_synthetic_csv, write_synthetic_csv, SyntheticSet, SyntheticSpec, SyntheticTarget,
};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar, Tensor};

/// Labelled images, `images: [N, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub name: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, images: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let name = name.into();
        if images.shape().len() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "dataset {name}: {} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "dataset {name}: label {bad} outside [0, {classes})"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            name,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape `[C, H, W]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// The listed samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Dataset {
            images: self.images.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            name: self.name.clone(),
        })
    }

    /// The first `n` samples (all of them if fewer).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn channel_means(&self) -> Result<Vec<f64>> {
        let [n, c, h, w] = self.images.dims4()?;
        let plane = h * w;
        let mut sums = vec![0.0f64; c];
        for b in 0..n {
            for (ch, s) in sums.iter_mut().enumerate() {
                let start = (b * c + ch) * plane;
                *s += self.images.data()[start..start + plane]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
        }
        let count = (n * plane).max(1) as f64;
        Ok(sums.into_iter().map(|s| s / count).collect())
    }

    /// Subtracts `means[c]` from every pixel of channel `c`.
    pub fn subtract_means(&mut self, means: &[f64]) -> Result<()> {
        let v = Tensor::vector(&means.iter().map(|&m| T::cast(m)).collect::<Vec<_>>());
        self.images = self.images.broadcast_per_channel(&v, |x, m| x - m)?;
        Ok(())
    }
}

/// Centers both splits on the training split's per-channel means, which are returned.
pub fn subtract_channel_mean<T: Scalar>(train: &mut Dataset<T>, test: &mut Dataset<T>) -> Result<Vec<f64>> {
    let means = train.channel_means()?;
    train.subtract_means(&means)?;
    test.subtract_means(&means)?;
    Ok(means)
}

/// Index partition `(train, validation)` with `round(fraction * n)` validation
/// indices drawn by a seeded permutation. Both parts are sorted ascending.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_val = (fraction * n as f64).round() as usize;
    let perm = Rng::seeded(seed).permutation(n);
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

pub fn split_validation<T: Scalar>(d: &Dataset<T>, fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, val) = split_indices(d.len(), fraction, seed)?;
    Ok((d.subset(&train)?, d.subset(&val)?))
}
