//! Run configuration: plain-text `key = value` lines, `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use srelu::activation::{ActivationKind, SReluVariant};
use srelu::train::TrainConfig;
use srelu::{DType, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

impl DatasetKind {
    pub fn default_data_dir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "data/mnist-subset",
            DatasetKind::Cifar10 => "data/cifar-10-batches-bin",
            DatasetKind::Synthetic => "",
        }
    }

    pub fn default_preset(self) -> &'static str {
        match self {
            DatasetKind::Cifar10 => "cnn-cifar",
            _ => "cnn-small",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err(Error::invalid(format!(
                "unknown dataset `{s}` (mnist, cifar10, synthetic)"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub activation: ActivationKind,
    pub dataset: DatasetKind,
    /// `None` falls back to the dataset's default directory.
    pub data_dir: Option<PathBuf>,
    /// `None` falls back to the dataset's default preset.
    pub preset: Option<String>,
    /// Network description file; takes precedence over `preset`.
    pub network: Option<PathBuf>,
    pub out: PathBuf,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub mean_subtract: bool,
    pub precision: DType,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            activation: ActivationKind::SRelu(SReluVariant::ChannelWise),
            dataset: DatasetKind::Mnist,
            data_dir: None,
            preset: None,
            network: None,
            out: PathBuf::from("out"),
            train_subset: None,
            test_subset: None,
            mean_subtract: false,
            precision: DType::F32,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("cannot parse `{value}` as a value for `{key}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            msg: format!("`{key}` expects true or false, got `{value}`"),
        }),
    }
}

fn semantic(line: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Config {
        line,
        msg: e.to_string(),
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(self.dataset.default_data_dir()))
    }

    pub fn preset(&self) -> &str {
        self.preset.as_deref().unwrap_or(self.dataset.default_preset())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "lr" => t.optimizer.lr = parse(line, key, value)?,
            "momentum" => t.optimizer.momentum = parse(line, key, value)?,
            "weight_decay" => t.optimizer.weight_decay = parse(line, key, value)?,
            "freeze_epochs" => t.freeze.freeze_epochs = parse(line, key, value)?,
            "t_tilde" => t.freeze.t_tilde = parse(line, key, value)?,
            "a_tilde" => t.freeze.a_tilde = parse(line, key, value)?,
            "k_fraction" => t.freeze.k_fraction = parse(line, key, value)?,
            "calib_samples" => {
                t.freeze.calib_samples = match value {
                    "all" => None,
                    v => Some(parse(line, key, v)?),
                }
            }
            "seed" => t.seed = parse(line, key, value)?,
            "epochs" => t.epochs = parse(line, key, value)?,
            "batch_size" => t.batch_size = parse(line, key, value)?,
            "deterministic" => t.deterministic = parse_bool(line, key, value)?,
            "lr_decay_every" => t.lr_decay_every = parse(line, key, value)?,
            "lr_decay_factor" => t.lr_decay_factor = parse(line, key, value)?,
            "activation" => self.activation = value.parse().map_err(semantic(line))?,
            "dataset" => self.dataset = value.parse().map_err(semantic(line))?,
            "data_dir" => self.data_dir = Some(value.into()),
            "preset" => self.preset = Some(value.into()),
            "network" => self.network = Some(value.into()),
            "out" => self.out = value.into(),
            "train_subset" => self.train_subset = Some(parse(line, key, value)?),
            "test_subset" => self.test_subset = Some(parse(line, key, value)?),
            "mean_subtract" => self.mean_subtract = parse_bool(line, key, value)?,
            "precision" => {
                self.precision = match value {
                    "f32" => DType::F32,
                    "f64" => DType::F64,
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("precision must be f32 or f64, got `{value}`"),
                        })
                    }
                }
            }
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    /// Checks ranges that individual keys cannot check alone.
    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(semantic(0))?;
        if self.train_subset == Some(0) || self.test_subset == Some(0) {
            return Err(Error::Config {
                line: 0,
                msg: "subset sizes must be positive".into(),
            });
        }
        Ok(())
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got `{body}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("expected `key = value`, got `{body}`"),
                });
            }
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            seen.push(key.to_string());
            cfg.set(line, key, value)?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: Error) -> usize {
        match e {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn full_config() {
        let cfg: RunConfig = "# mnist run
lr = 0.05
momentum = 0.8
weight_decay = 0
freeze_epochs = 2
t_tilde = 0.5
a_tilde = 0.1
k_fraction = 0.95
calib_samples = all
seed = 9   # trailing comment
epochs = 4
batch_size = 32
activation = lrelu 0.1
deterministic = false
dataset = cifar10
train_subset = 100
precision = f64
"
        .parse()
        .unwrap();
        assert_eq!(cfg.train.optimizer.lr, 0.05);
        assert_eq!(cfg.train.optimizer.weight_decay, 0.0);
        assert_eq!(cfg.train.freeze.freeze_epochs, 2);
        assert_eq!(cfg.train.freeze.calib_samples, None);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.activation, ActivationKind::LRelu { slope: 0.1 });
        assert!(!cfg.train.deterministic);
        assert_eq!(cfg.preset(), "cnn-cifar");
        assert_eq!(cfg.train_subset, Some(100));
        assert_eq!(cfg.precision, DType::F64);
        cfg.validate().unwrap();
    }

    #[test]
    fn defaults() {
        let cfg: RunConfig = "".parse().unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.preset(), "cnn-small");
        assert_eq!(cfg.data_dir(), PathBuf::from("data/mnist-subset"));
        assert_eq!(cfg.train.freeze.k_fraction, 0.9);
    }

    #[test]
    fn rejections_carry_line_numbers() {
        assert_eq!(
            line_of("lr = 0.1\nlearning_rate = 0.1".parse::<RunConfig>().unwrap_err()),
            2
        );
        assert_eq!(line_of("\n\nepochs = three".parse::<RunConfig>().unwrap_err()), 3);
        assert_eq!(line_of("seed = 1\nseed = 2".parse::<RunConfig>().unwrap_err()), 2);
        assert_eq!(line_of("activation = swish".parse::<RunConfig>().unwrap_err()), 1);
        assert_eq!(line_of("deterministic = maybe".parse::<RunConfig>().unwrap_err()), 1);
        assert_eq!(line_of("lr 0.1".parse::<RunConfig>().unwrap_err()), 1);
        assert_eq!(line_of("lr =".parse::<RunConfig>().unwrap_err()), 1);
        assert_eq!(line_of("precision = f16".parse::<RunConfig>().unwrap_err()), 1);
        assert_eq!(line_of("batch_size = -3".parse::<RunConfig>().unwrap_err()), 1);
    }

    #[test]
    fn range_checks_happen_in_validate() {
        let cfg: RunConfig = "a_tilde = 1.5".parse().unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let cfg: RunConfig = "train_subset = 0".parse().unwrap();
        assert!(cfg.validate().is_err());
    }
}
