//! Momentum SGD with per-group weight-decay exclusion, the SReLU
//! freeze-then-calibrate schedule, the epoch loop and metric output.

mod calibrate;
mod capacity;
mod inspect;
mod optim;

pub use calibrate::{
    calibrate_srelu, k_for, kth_largest, Calibration, FreezeSchedule, DEFAULT_CALIB_SAMPLES, DEFAULT_FREEZE_EPOCHS,
    DEFAULT_K_FRACTION,
};
pub use capacity::{capacity_probe, CapacityOptions, CapacityResult, CAPACITY_NETWORK};
pub use inspect::{input_magnitude_profile, inspect_params, write_params_csv, write_profile_csv, SReluLayerMeans};
pub use optim::{momentum_step, OptimizerConfig, OptimizerState};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Rng, RngState, Scalar};

/// Batch size used by every evaluation pass, so losses do not depend on the
/// training batch size.
pub const EVAL_BATCH: usize = 500;
const CALIB_STREAM: u64 = 0xca1b;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub freeze: FreezeSchedule,
    pub seed: u64,
    /// Zero the wall-time column so metric files compare byte for byte.
    pub deterministic: bool,
    /// Multiply the learning rate by `lr_decay_factor` every this many epochs; 0 disables.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig::default(),
            epochs: 10,
            batch_size: 64,
            freeze: FreezeSchedule::default(),
            seed: 1,
            deterministic: true,
            lr_decay_every: 0,
            lr_decay_factor: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.freeze.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::invalid(format!(
                "lr_decay_factor must be positive, got {}",
                self.lr_decay_factor
            )));
        }
        Ok(())
    }

    /// Learning rate for 0-based `epoch` under the step schedule.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            0 => self.optimizer.lr,
            every => self.optimizer.lr * self.lr_decay_factor.powi((epoch / every) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    /// 1-based.
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub error: f64,
    pub seconds: f64,
    pub srelu_means: Option<Vec<SReluLayerMeans>>,
}

pub const METRICS_HEADER: &str = "epoch,split,loss,error,seconds";

impl MetricRecord {
    /// One CSV line (no newline); `seconds` is written as 0 when `zero_time`.
    pub fn csv_line(&self, zero_time: bool) -> String {
        let secs = if zero_time { 0.0 } else { self.seconds };
        format!("{},{},{},{},{}", self.epoch, self.split, self.loss, self.error, secs)
    }
}

/// Appends records to a metrics CSV, writing the header when the file is new or empty.
pub fn append_metrics(path: impl AsRef<Path>, records: &[MetricRecord], zero_time: bool) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut text = String::new();
    if f.metadata().map_err(io)?.len() == 0 {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    for r in records {
        text.push_str(&r.csv_line(zero_time));
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(io)
}

/// Mean cross-entropy and top-1 error over a dataset.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset<T>) -> Result<(f64, f64)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::invalid(format!("dataset {} is empty", data.name)));
    }
    let mut loss_sum = 0.0;
    let mut wrong = 0usize;
    for start in (0..n).step_by(EVAL_BATCH) {
        let idx: Vec<usize> = (start..(start + EVAL_BATCH).min(n)).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let pass = net.forward_with_loss(&data.images.select_rows(&idx)?, &labels)?;
        loss_sum += pass.loss.map_or(f64::NAN, |l| l.as_f64()) * idx.len() as f64;
        wrong += pass.predictions.iter().zip(&labels).filter(|(p, l)| p != l).count();
    }
    Ok((loss_sum / n as f64, wrong as f64 / n as f64))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub metrics: Vec<MetricRecord>,
    /// Minibatch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub optimizer: OptimizerState<T>,
    pub calibration: Vec<Calibration>,
    /// Generator state after the last epoch, for checkpoints.
    pub rng: RngState,
    /// Epoch (0-based) at whose start calibration ran.
    pub calibrated_at: Option<usize>,
}

/// Trains `net` on `train_set`. After every epoch the network is evaluated on
/// the training set (split `train`) and on each `(name, dataset)` in `eval_sets`.
///
/// SReLU layers are frozen for `freeze.freeze_epochs` epochs; at the start of
/// epoch `freeze_epochs` their right thresholds are calibrated and they are
/// unfrozen. With `freeze_epochs == 0` this happens before the first epoch;
/// if training ends first, it never happens.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset<T>,
    eval_sets: &[(&str, &Dataset<T>)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&[MetricRecord]),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let has_srelu = !net.srelu_layers().is_empty();
    net.set_srelu_frozen(cfg.freeze.freeze_epochs > 0);

    let root = Rng::seeded(cfg.seed);
    let mut rng = root.clone();
    let mut opt = OptimizerState::new(net, cfg.optimizer)?;
    let mut metrics = Vec::new();
    let mut step_losses = Vec::new();
    let mut calibration = Vec::new();
    let mut calibrated_at = None;
    let n = train_set.len();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        if has_srelu && epoch == cfg.freeze.freeze_epochs {
            let sample = match cfg.freeze.calib_samples {
                Some(m) if m < n => {
                    let mut idx = root.fork(CALIB_STREAM).permutation(n);
                    idx.truncate(m);
                    idx.sort_unstable();
                    train_set.images.select_rows(&idx)?
                }
                _ => train_set.images.clone(),
            };
            calibration = calibrate_srelu(net, &sample, cfg.freeze.k_fraction, EVAL_BATCH)?;
            calibrated_at = Some(epoch);
        }

        let lr = cfg.lr_at(epoch);
        let order = rng.permutation(n);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let batch = train_set.images.select_rows(chunk)?;
            let pass = net.forward_with_loss(&batch, &labels)?;
            let loss = pass.loss.map_or(f64::NAN, |l| l.as_f64());
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    step: step + 1,
                    value: loss,
                });
            }
            step_losses.push(loss);
            let grads = net.backward(&pass)?;
            opt.apply(net, &grads, lr)?;
        }
        let seconds = started.elapsed().as_secs_f64();

        let means = if has_srelu { Some(inspect_params(net)?) } else { None };
        let mut records = Vec::with_capacity(1 + eval_sets.len());
        let (loss, error) = evaluate(net, train_set)?;
        records.push(MetricRecord {
            epoch: epoch + 1,
            split: "train".into(),
            loss,
            error,
            seconds,
            srelu_means: means.clone(),
        });
        for (name, data) in eval_sets {
            let (loss, error) = evaluate(net, data)?;
            records.push(MetricRecord {
                epoch: epoch + 1,
                split: name.to_string(),
                loss,
                error,
                seconds,
                srelu_means: means.clone(),
            });
        }
        on_epoch(&records);
        metrics.extend(records);
    }

    Ok(TrainOutcome {
        metrics,
        step_losses,
        optimizer: opt,
        calibration,
        rng: rng.state(),
        calibrated_at,
    })
}
