use crate::activation::{Activation, ActivationInit, SReluVariant};
use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_K_FRACTION: f64 = 0.9;
pub const DEFAULT_CALIB_SAMPLES: usize = 10_000;
pub const DEFAULT_FREEZE_EPOCHS: usize = 1;

/// When SReLU parameters stay at their LReLU-equivalent start, and how the
/// right threshold is re-estimated afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreezeSchedule {
    pub freeze_epochs: usize,
    pub t_tilde: f64,
    pub a_tilde: f64,
    /// `k = ceil(k_fraction * |X|)` for the k-th largest observed input.
    pub k_fraction: f64,
    /// Training examples used for calibration; `None` uses all of them.
    pub calib_samples: Option<usize>,
}

impl Default for FreezeSchedule {
    fn default() -> Self {
        let init = ActivationInit::default();
        FreezeSchedule {
            freeze_epochs: DEFAULT_FREEZE_EPOCHS,
            t_tilde: init.t_tilde,
            a_tilde: init.a_tilde,
            k_fraction: DEFAULT_K_FRACTION,
            calib_samples: Some(DEFAULT_CALIB_SAMPLES),
        }
    }
}

impl FreezeSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_tilde > 0.0 && self.t_tilde.is_finite()) {
            return Err(Error::invalid(format!(
                "t_tilde must be positive, got {}",
                self.t_tilde
            )));
        }
        if !(self.a_tilde > 0.0 && self.a_tilde < 1.0) {
            return Err(Error::invalid(format!(
                "a_tilde must lie in (0, 1), got {}",
                self.a_tilde
            )));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "k_fraction must lie in (0, 1], got {}",
                self.k_fraction
            )));
        }
        if self.calib_samples == Some(0) {
            return Err(Error::invalid("calib_samples must be positive"));
        }
        Ok(())
    }

    pub fn init(&self) -> ActivationInit {
        ActivationInit {
            t_tilde: self.t_tilde,
            a_tilde: self.a_tilde,
        }
    }
}

/// `ceil(fraction * n)`, clamped to `[1, n]`. A product within `1e-9` above an
/// integer is taken as that integer, so `0.9 * 30` gives 27 even though the
/// floating-point product is slightly larger.
pub fn k_for(fraction: f64, n: usize) -> usize {
    let prod = fraction * n as f64;
    let mut k = prod.ceil();
    if k - prod > 1.0 - 1e-9 {
        k -= 1.0;
    }
    (k as usize).clamp(1, n.max(1))
}

/// k-th largest (1-based) by partial selection; duplicates count individually.
pub fn kth_largest<T: Scalar>(values: &mut [T], k: usize) -> Result<T> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {} values",
            values.len()
        )));
    }
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| b.as_f64().total_cmp(&a.as_f64()));
    Ok(*kth)
}

/// What calibration did to one SReLU layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub layer: usize,
    /// Observations per unit (one entry for a channel-shared layer).
    pub observations: Vec<usize>,
    pub k: Vec<usize>,
    pub t_r: Vec<f64>,
}

/// Runs `sample` through the network, collects every SReLU unit's inputs and
/// sets each right threshold to the k-th largest of them. Only `t_r` changes;
/// every SReLU layer is unfrozen afterwards.
pub fn calibrate_srelu<T: Scalar>(
    net: &mut Network<T>,
    sample: &Tensor<T>,
    k_fraction: f64,
    batch_size: usize,
) -> Result<Vec<Calibration>> {
    let n = sample.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::invalid("calibration sample is empty"));
    }
    let layers: Vec<(usize, usize)> = net.srelu_layers().into_iter().map(|(i, p)| (i, p.arity())).collect();
    let mut observed: Vec<Vec<Vec<T>>> = layers.iter().map(|&(_, a)| vec![Vec::new(); a]).collect();

    for start in (0..n).step_by(batch_size.max(1)) {
        let idx: Vec<usize> = (start..(start + batch_size.max(1)).min(n)).collect();
        let pass = net.forward(&sample.select_rows(&idx)?)?;
        for (slot, &(li, arity)) in layers.iter().enumerate() {
            let x = pass.layer_input(li);
            let [nb, c, h, w] = x.dims4()?;
            let plane = h * w;
            for b in 0..nb {
                for ch in 0..c {
                    let unit = if arity == 1 { 0 } else { ch };
                    let start = (b * c + ch) * plane;
                    observed[slot][unit].extend_from_slice(&x.data()[start..start + plane]);
                }
            }
        }
    }

    let mut report = Vec::with_capacity(layers.len());
    for ((li, _), mut units) in layers.into_iter().zip(observed) {
        let mut rec = Calibration {
            layer: li,
            observations: Vec::new(),
            k: Vec::new(),
            t_r: Vec::new(),
        };
        let mut thresholds = Vec::with_capacity(units.len());
        for (u, values) in units.iter_mut().enumerate() {
            if values.is_empty() {
                return Err(Error::invalid(format!("SReLU unit {u} of layer {li} saw no inputs")));
            }
            let k = k_for(k_fraction, values.len());
            let t = kth_largest(values, k)?;
            rec.observations.push(values.len());
            rec.k.push(k);
            rec.t_r.push(t.as_f64());
            thresholds.push(t);
        }
        match &mut net.layers_mut()[li] {
            Layer::Activation(Activation::SRelu(p)) => {
                debug_assert!(p.variant == SReluVariant::ChannelShared || thresholds.len() == p.arity());
                p.t_r.data_mut().copy_from_slice(&thresholds);
                p.frozen = false;
            }
            _ => unreachable!("index came from srelu_layers"),
        }
        report.push(rec);
    }
    Ok(report)
}
