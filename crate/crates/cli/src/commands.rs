use std::path::{Path, PathBuf};
use std::time::Instant;

use srelu::data::{load_cifar10, load_mnist, split_indices, subtract_channel_mean, Dataset, SyntheticTarget};
use srelu::network::{load_checkpoint, preset, save_checkpoint, Checkpoint, Network, NetworkSpec};
use srelu::train::{
    append_metrics, capacity_probe, evaluate, input_magnitude_profile, inspect_params, train, write_params_csv,
    write_profile_csv, CapacityOptions, MetricRecord, SReluLayerMeans, EVAL_BATCH,
};
use srelu::verify::{activation_gradcheck, network_gradcheck, GradCheckReport, SuiteOptions, GRAD_TOLERANCE};
use srelu::{DType, Error, Result, Rng, Scalar};

use crate::config::{DatasetKind, RunConfig};

/// Weight initialisation draws from its own stream so that it does not
/// consume the shuffling sequence.
const INIT_STREAM: u64 = 0x1417;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const PARAMS_FILE: &str = "srelu_params.csv";
pub const PROFILE_FILE: &str = "input_profile.csv";

/// Why a command failed, mapped to a process exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e {
                Error::Config { .. } | Error::InvalidArgument(_) => 1,
                Error::NonFinite { .. } | Error::Diverged { .. } => 3,
                _ => 2,
            },
            Failure::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

pub fn network_spec(cfg: &RunConfig) -> Result<NetworkSpec> {
    match &cfg.network {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.replace("{act}", &cfg.activation.to_string()).parse()
        }
        None => preset(cfg.preset(), cfg.activation),
    }
}

/// Training and test sets after subsetting and optional mean subtraction.
pub fn load_data<T: Scalar>(cfg: &RunConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    let dir = cfg.data_dir();
    let (mut train, mut test) = match cfg.dataset {
        DatasetKind::Mnist => load_mnist::<T>(&dir)?,
        DatasetKind::Cifar10 => load_cifar10::<T>(&dir)?,
        DatasetKind::Synthetic => {
            return Err(Error::invalid(
                "the synthetic dataset is a regression set; use the `capacity` command",
            ))
        }
    };
    if let Some(n) = cfg.train_subset {
        train = train.head(n)?;
    }
    if let Some(n) = cfg.test_subset {
        test = test.head(n)?;
    }
    if cfg.mean_subtract {
        subtract_channel_mean(&mut train, &mut test)?;
    }
    Ok((train, test))
}

fn check_compatible<T: Scalar>(spec: &NetworkSpec, data: &Dataset<T>) -> Result<()> {
    if spec.input != data.sample_shape() {
        return Err(Error::ShapeMismatch {
            op: "network input vs dataset",
            expected: spec.input.clone(),
            actual: data.sample_shape().to_vec(),
        });
    }
    match spec.classes() {
        Some(c) if c == data.classes => Ok(()),
        Some(c) => Err(Error::invalid(format!(
            "network has {c} output classes but {} has {}",
            data.name, data.classes
        ))),
        None => Err(Error::invalid("classification needs a network ending in a loss layer")),
    }
}

fn print_records(records: &[MetricRecord]) {
    for r in records {
        println!(
            "epoch {:>3}  {:<6} loss {:.6}  error {:.4}",
            r.epoch, r.split, r.loss, r.error
        );
    }
    if let Some(means) = records.first().and_then(|r| r.srelu_means.as_ref()) {
        for m in means {
            println!(
                "           {:<8} t_r {:.4}  t_l {:.4}  a_r {:.4}  a_l {:.4}",
                m.layer, m.t_r, m.t_l, m.a_r, m.a_l
            );
        }
    }
}

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    cfg.validate()?;
    match cfg.precision {
        DType::F32 => train_as::<f32>(cfg),
        DType::F64 => train_as::<f64>(cfg),
    }
}

fn train_as<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let started = Instant::now();
    let spec = network_spec(cfg)?;
    let (train_set, test_set) = load_data::<T>(cfg)?;
    check_compatible(&spec, &train_set)?;
    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics_path = out.join(METRICS_FILE);
    match std::fs::remove_file(&metrics_path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(Error::io(&metrics_path, e).into()),
        _ => {}
    }

    let tc = &cfg.train;
    let mut net = Network::<T>::new(&spec, tc.freeze.init(), &mut Rng::seeded(tc.seed).fork(INIT_STREAM))?;
    let count = net.param_count();
    println!(
        "{} on {}: {} train / {} test, {} params ({} in activations)",
        cfg.activation,
        cfg.dataset,
        train_set.len(),
        test_set.len(),
        count.total(),
        count.activation
    );

    let mut write_err = None;
    let outcome = train(&mut net, &train_set, &[("test", &test_set)], tc, |records| {
        print_records(records);
        if write_err.is_none() {
            write_err = append_metrics(&metrics_path, records, tc.deterministic).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(epoch) = outcome.calibrated_at {
        println!("calibrated right thresholds before epoch {}", epoch + 1);
    }

    let checkpoint = Checkpoint {
        network: net,
        rng: outcome.rng,
        epoch: tc.epochs as u64,
    };
    save_checkpoint(&checkpoint, out.join(CHECKPOINT_FILE))?;
    let net = checkpoint.network;
    if !net.srelu_layers().is_empty() {
        write_params_csv(&inspect_params(&net)?, out.join(PARAMS_FILE))?;
        let n = train_set.len().min(tc.freeze.calib_samples.unwrap_or(usize::MAX));
        let sample = train_set.head(n)?;
        let profile = input_magnitude_profile(&net, &sample.images, EVAL_BATCH)?;
        write_profile_csv(&profile, out.join(PROFILE_FILE))?;
    }
    println!("wrote {}", out.display());
    eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Test,
}

impl EvalSplit {
    pub fn name(self) -> &'static str {
        match self {
            EvalSplit::Train => "train",
            EvalSplit::Test => "test",
        }
    }
}

/// Loads a checkpoint of either precision.
fn with_checkpoint<R>(
    path: &Path,
    f32_fn: impl FnOnce(Checkpoint<f32>) -> Result<R>,
    f64_fn: impl FnOnce(Checkpoint<f64>) -> Result<R>,
) -> Result<R> {
    match load_checkpoint::<f32>(path) {
        Ok(c) => f32_fn(c),
        Err(Error::DtypeMismatch { .. }) => f64_fn(load_checkpoint::<f64>(path)?),
        Err(e) => Err(e),
    }
}

pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig, split: EvalSplit, metrics: Option<PathBuf>) -> CmdResult {
    cfg.validate()?;
    let metrics = metrics.unwrap_or_else(|| checkpoint.parent().unwrap_or_else(|| Path::new(".")).join(METRICS_FILE));
    let record = with_checkpoint(checkpoint, |c| eval_as(c, cfg, split), |c| eval_as(c, cfg, split))?;
    println!(
        "{} error {:.6} (loss {:.6}) at epoch {}",
        split.name(),
        record.error,
        record.loss,
        record.epoch
    );
    append_metrics(&metrics, &[record], cfg.train.deterministic)?;
    Ok(())
}

fn eval_as<T: Scalar>(c: Checkpoint<T>, cfg: &RunConfig, split: EvalSplit) -> Result<MetricRecord> {
    let started = Instant::now();
    let (train_set, test_set) = load_data::<T>(cfg)?;
    let data = match split {
        EvalSplit::Train => train_set,
        EvalSplit::Test => test_set,
    };
    check_compatible(c.network.spec(), &data)?;
    let (loss, error) = evaluate(&c.network, &data)?;
    Ok(MetricRecord {
        epoch: c.epoch as usize,
        split: format!("eval-{}", split.name()),
        loss,
        error,
        seconds: started.elapsed().as_secs_f64(),
        srelu_means: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradcheckPreset {
    Default,
    Activations,
    Network,
}

pub fn cmd_gradcheck(preset: GradcheckPreset, opts: &SuiteOptions) -> CmdResult {
    let mut report = GradCheckReport::new(GRAD_TOLERANCE);
    if preset != GradcheckPreset::Network {
        report.merge(activation_gradcheck(opts)?);
    }
    if preset != GradcheckPreset::Activations {
        report.merge(network_gradcheck(opts)?);
    }
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|e| e.name.as_str()).collect();
        Err(Failure::Verification(format!(
            "gradient mismatch in {}",
            names.join(", ")
        )))
    }
}

pub fn cmd_capacity(opts: &CapacityOptions) -> CmdResult {
    if opts.target == SyntheticTarget::Identity {
        println!("note: identity is a sanity target, not a capacity test");
    }
    let r = capacity_probe(opts)?;
    println!("target {}  activation {}  steps {}", opts.target, opts.kind, opts.steps);
    println!("train mse {:e}", r.train_mse);
    println!("test mse {:e}", r.test_mse);
    Ok(())
}

fn print_means(rows: &[SReluLayerMeans]) {
    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "layer", "t_r", "t_l", "a_r", "a_l"
    );
    for r in rows {
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.layer, r.t_r, r.t_l, r.a_r, r.a_l
        );
    }
}

pub fn cmd_inspect(checkpoint: &Path, out: Option<&Path>) -> CmdResult {
    let rows = with_checkpoint(
        checkpoint,
        |c| inspect_params(&c.network),
        |c| inspect_params(&c.network),
    )?;
    print_means(&rows);
    if let Some(path) = out {
        write_params_csv(&rows, path)?;
    }
    Ok(())
}

fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    let mut text = String::from("index\n");
    for i in idx {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `train_idx.csv` and `val_idx.csv` for `n` examples.
pub fn cmd_split(n: usize, fraction: f64, seed: u64, out: &Path) -> CmdResult {
    let (train, val) = split_indices(n, fraction, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_indices(&out.join("train_idx.csv"), &train)?;
    write_indices(&out.join("val_idx.csv"), &val)?;
    println!(
        "{} train / {} validation indices in {}",
        train.len(),
        val.len(),
        out.display()
    );
    Ok(())
}

/// Training-set size for `split` when no explicit count is given.
pub fn dataset_len(cfg: &RunConfig) -> Result<usize> {
    load_data::<f32>(cfg).map(|(train, _)| train.len())
}
