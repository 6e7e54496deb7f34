//! Acceptance checks. Runs as a plain binary (no libtest harness) so that
//! every PASS/FAIL line reaches the terminal; exits non-zero if any fails.

// `ensure!(a < b)` must fail on NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use srelu::activation::{
    lrelu_forward, lrelu_input_grad, prelu_forward, prelu_grads, relu_forward, relu_input_grad, srelu_forward,
    srelu_input_grad, ActivationInit, PReluParams, SReluParams, SReluUnit, SReluVariant,
};
use srelu::data::{gen_synthetic, Dataset, SyntheticSet, SyntheticSpec, SyntheticTarget};
use srelu::network::{Gradients, Layer, Network, NetworkSpec};
use srelu::train::{train, CapacityOptions, FreezeSchedule, OptimizerConfig, OptimizerState, TrainConfig};
use srelu::verify::kth_largest_oracle;
use srelu::{Rng, Tensor};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let checks: [Criterion; 10] = [
        (
            "activation gradient oracle",
            Duration::from_secs(30),
            activation_gradcheck,
        ),
        ("network gradient oracle", Duration::from_secs(60), network_gradcheck),
        ("degeneracy equivalence", Duration::MAX, degeneracy),
        ("calibration exactness", Duration::MAX, calibration),
        ("freeze fidelity", Duration::MAX, freeze_fidelity),
        ("parameter overhead", Duration::MAX, overhead),
        ("weight-decay exclusion", Duration::MAX, weight_decay_exclusion),
        ("capacity probe", Duration::from_secs(120), capacity),
        ("mnist trend", Duration::from_secs(600), mnist_trend),
        ("determinism", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in checks {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = started.elapsed();
        let result = result.and_then(|detail| {
            if elapsed > budget {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("PASS  {name:<28} {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<28} {detail} [{elapsed:.1?}]");
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn srelu_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srelu"))
        .args(args)
        .output()
        .expect("run srelu binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    let o = srelu_bin(args);
    ensure!(
        o.status.success(),
        "`srelu {}` exited {:?}: {}",
        args.join(" "),
        o.status.code(),
        String::from_utf8_lossy(&o.stderr).trim()
    );
    Ok(stdout(&o))
}

fn gradcheck(preset: &str) -> Check {
    let out = run_ok(&["gradcheck", "--preset", preset, "--samples", "1000"])?;
    ensure!(out.contains("tolerance 1e-5: all passed"), "report:\n{out}");
    let rows = out.lines().filter(|l| l.ends_with(" pass")).count();
    Ok(format!("{rows} parameter tensors within 1e-5"))
}

fn activation_gradcheck() -> Check {
    let detail = gradcheck("activations")?;
    let out = run_ok(&["gradcheck", "--preset", "activations", "--samples", "1000"])?;
    for name in [
        "relu.",
        "lrelu",
        "prelu.a",
        "apl1.",
        "apl2.",
        "srelu.t_r",
        "srelu-shared.a_l",
    ] {
        ensure!(out.contains(name), "{name} not covered");
    }
    Ok(detail)
}

fn network_gradcheck() -> Check {
    gradcheck("network")
}

fn bits(t: &Tensor<f64>) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn degeneracy() -> Check {
    let mut rng = Rng::seeded(2024);
    let x = Tensor::rand_uniform(&[100, 4, 25, 10], -5.0, 5.0, &mut rng).unwrap();
    let up = Tensor::rand_uniform(x.shape(), -1.0, 1.0, &mut rng).unwrap();
    for variant in [SReluVariant::ChannelWise, SReluVariant::ChannelShared] {
        let as_relu = SReluParams::uniform(variant, 4, SReluUnit::new(1.0, 1.0, 0.0, 0.0));
        ensure!(
            bits(&srelu_forward(&x, &as_relu).unwrap()) == bits(&relu_forward(&x).unwrap()),
            "relu forward"
        );
        ensure!(
            bits(&srelu_input_grad(&x, &as_relu, &up).unwrap()) == bits(&relu_input_grad(&x, &up).unwrap()),
            "relu input gradient"
        );
        let as_leaky = SReluParams::uniform(variant, 4, SReluUnit::new(1.0, 1.0, 0.0, 0.2));
        let prelu = PReluParams::new(4, 0.2);
        let y = bits(&srelu_forward(&x, &as_leaky).unwrap());
        ensure!(y == bits(&lrelu_forward(&x, 0.2).unwrap()), "lrelu forward");
        ensure!(y == bits(&prelu_forward(&x, &prelu).unwrap()), "prelu forward");
        let d = bits(&srelu_input_grad(&x, &as_leaky, &up).unwrap());
        ensure!(
            d == bits(&lrelu_input_grad(&x, 0.2, &up).unwrap()),
            "lrelu input gradient"
        );
        ensure!(
            d == bits(&prelu_grads(&x, &prelu, &up).unwrap().d_input),
            "prelu input gradient"
        );
    }
    Ok(format!("{} inputs, both variants, bitwise", x.len()))
}

fn net(text: &str, seed: u64) -> Network<f64> {
    let spec: NetworkSpec = text.parse().unwrap();
    Network::new(&spec, ActivationInit::default(), &mut Rng::seeded(seed)).unwrap()
}

/// Three classes, each lighting up its own band of rows.
fn blobs(n: usize, side: usize, channels: usize, seed: u64) -> Dataset<f64> {
    let mut rng = Rng::seeded(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
    let mut x = Tensor::rand_uniform(&[n, channels, side, side], -0.5, 0.5, &mut rng).unwrap();
    let plane = side * side;
    for (i, &l) in labels.iter().enumerate() {
        for c in 0..channels {
            let start = (i * channels + c) * plane + l * plane / 3;
            for v in &mut x.data_mut()[start..start + plane / 3] {
                *v += 1.0;
            }
        }
    }
    Dataset::new("blobs", x, labels, 3).unwrap()
}

/// Inputs seen by each unit of SReLU layer `li` in one forward pass.
fn unit_inputs(net: &Network<f64>, sample: &Tensor<f64>, li: usize, shared: bool) -> Vec<Vec<f64>> {
    let pass = net.forward(sample).unwrap();
    let x = pass.layer_input(li);
    let [n, c, h, w] = x.dims4().unwrap();
    let mut out = vec![Vec::new(); if shared { 1 } else { c }];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * h * w;
            out[if shared { 0 } else { ch }].extend_from_slice(&x.data()[start..start + h * w]);
        }
    }
    out
}

fn calibration() -> Check {
    let mut rng = Rng::seeded(0x5eed);
    let mut units = 0;
    for run in 0..100u64 {
        let channels = 1 + rng.below(4);
        let shared = rng.below(3) == 0;
        let act = if shared { "srelu-shared" } else { "srelu" };
        let side = 3 + rng.below(4);
        let text = format!(
            "input 2 {side} {side}\nconv2d 2 {channels} 2 stride=1 pad=0\nactivation {act}\nflatten\ndense {} 5\nactivation {act}\ndense 5 3\nloss softmax-xent 3\n",
            channels * (side - 1) * (side - 1)
        );
        let data = blobs(10 + rng.below(60), side, 2, run);
        let freeze_epochs = 1 + rng.below(2);
        let cfg = TrainConfig {
            epochs: freeze_epochs,
            batch_size: 1 + rng.below(16),
            freeze: FreezeSchedule {
                freeze_epochs,
                calib_samples: None,
                ..FreezeSchedule::default()
            },
            seed: run,
            ..TrainConfig::default()
        };
        // The network as it stands when the freeze phase ends...
        let mut frozen = net(&text, run);
        train(&mut frozen, &data, &[], &cfg, |_| {}).unwrap();
        // ...and a run that carries on past it.
        let mut full = net(&text, run);
        let outcome = train(
            &mut full,
            &data,
            &[],
            &TrainConfig {
                epochs: freeze_epochs + 1,
                ..cfg
            },
            |_| {},
        )
        .unwrap();
        ensure!(
            outcome.calibrated_at == Some(freeze_epochs),
            "run {run}: calibrated at {:?}",
            outcome.calibrated_at
        );
        ensure!(
            outcome.calibration.len() == 2,
            "run {run}: {} layers calibrated",
            outcome.calibration.len()
        );
        for cal in &outcome.calibration {
            for (u, xs) in unit_inputs(&frozen, &data.images, cal.layer, shared).iter().enumerate() {
                let k = (9 * xs.len()).div_ceil(10);
                let want = kth_largest_oracle(xs, k).unwrap();
                ensure!(
                    cal.k[u] == k,
                    "run {run}, layer {}, unit {u}: k {} vs {k}",
                    cal.layer,
                    cal.k[u]
                );
                ensure!(
                    cal.t_r[u].to_bits() == want.to_bits(),
                    "run {run}, layer {}, unit {u}: t_r {} vs oracle {want}",
                    cal.layer,
                    cal.t_r[u]
                );
                units += 1;
            }
        }
    }
    Ok(format!("100 runs, {units} units equal to the sort oracle"))
}

const FREEZE_NET: &str = "input 2 8 8
conv2d 2 4 3 stride=1 pad=1
activation {act}
maxpool 2
flatten
dense 64 10
activation {act}
dense 10 3
loss softmax-xent 3
";

fn freeze_fidelity() -> Check {
    let data = blobs(96, 8, 2, 17);
    let schedule = FreezeSchedule {
        freeze_epochs: 2,
        ..FreezeSchedule::default()
    };
    let cfg = |epochs| TrainConfig {
        epochs,
        batch_size: 16,
        freeze: schedule,
        seed: 33,
        ..TrainConfig::default()
    };
    let twin_act = format!("lrelu {}", schedule.a_tilde);

    let mut srelu_net = net(&FREEZE_NET.replace("{act}", "srelu"), 5);
    let initial = srelu_net.clone();
    let frozen_run = train(&mut srelu_net, &data, &[], &cfg(2), |_| {}).unwrap();
    for ((_, now), (_, then)) in srelu_net.srelu_layers().into_iter().zip(initial.srelu_layers()) {
        let same = now
            .tensors()
            .iter()
            .zip(then.tensors())
            .all(|(a, b)| bits(a) == bits(b));
        ensure!(same, "SReLU parameters moved during the freeze phase");
    }
    let mut twin = net(&FREEZE_NET.replace("{act}", &twin_act), 5);
    let twin_run = train(&mut twin, &data, &[], &cfg(2), |_| {}).unwrap();
    let loss_bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure!(
        loss_bits(&frozen_run.step_losses) == loss_bits(&twin_run.step_losses),
        "step losses differ from the {twin_act} twin"
    );

    // A longer run shares the frozen prefix, then calibrates and moves on.
    let mut longer = net(&FREEZE_NET.replace("{act}", "srelu"), 5);
    let long_run = train(&mut longer, &data, &[], &cfg(3), |_| {}).unwrap();
    let steps = frozen_run.step_losses.len();
    ensure!(
        loss_bits(&long_run.step_losses[..steps]) == loss_bits(&frozen_run.step_losses),
        "longer run diverges inside the freeze phase"
    );
    ensure!(
        long_run.calibrated_at == Some(2),
        "calibrated at {:?}",
        long_run.calibrated_at
    );
    Ok(format!("{steps} steps bitwise equal to the {twin_act} twin"))
}

fn overhead() -> Check {
    let text = "input 4\ndense 4 1000\nactivation {act}\ndense 1000 420\nactivation {act}\ndense 420 10\nloss softmax-xent 10\n";
    let count = |text: &str, act: &str| net(&text.replace("{act}", act), 0).param_count();
    let (s, p) = (count(text, "srelu"), count(text, "prelu"));
    ensure!(
        s.activation == 5680 && p.activation == 1420,
        "{} vs {}",
        s.activation,
        p.activation
    );
    ensure!(s.base == p.base, "base counts differ");

    let mut rng = Rng::seeded(3);
    for _ in 0..200 {
        let mut text = format!("input {} 8 8\n", 1 + rng.below(3));
        let mut c = text.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap();
        for _ in 0..rng.below(3) {
            let next = 1 + rng.below(6);
            text += &format!("conv2d {c} {next} 3 stride=1 pad=1\nactivation {{act}}\n");
            c = next;
        }
        text += "flatten\n";
        let mut width = c * 64;
        for _ in 0..1 + rng.below(2) {
            let next = 1 + rng.below(20);
            text += &format!("dense {width} {next}\nactivation {{act}}\n");
            width = next;
        }
        text += &format!("dense {width} 3\nloss softmax-xent 3\n");
        let (s, p) = (count(&text, "srelu"), count(&text, "prelu"));
        ensure!(
            s.activation == 4 * p.activation,
            "{} vs 4 x {} for\n{text}",
            s.activation,
            p.activation
        );
    }
    Ok("5680 vs 1420; 4x on 200 random networks".into())
}

fn zero_grads(network: &Network<f64>) -> Gradients<f64> {
    Gradients {
        per_layer: network
            .layers()
            .iter()
            .map(|l| l.params().iter().map(|t| Tensor::zeros(t.shape())).collect())
            .collect(),
        d_input: Tensor::zeros(&[1]),
    }
}

fn weight_decay_exclusion() -> Check {
    let (lr, decay) = (0.01, 5e-4);
    let mut shrunk = 0;
    for act in ["srelu", "srelu-shared", "prelu", "apl 2"] {
        let mut network = net(&FREEZE_NET.replace("{act}", act), 9);
        let before = network.clone();
        let mut opt = OptimizerState::new(
            &network,
            OptimizerConfig {
                lr,
                momentum: 0.9,
                weight_decay: decay,
            },
        )
        .unwrap();
        let zero = zero_grads(&network);
        opt.apply(&mut network, &zero, lr).unwrap();
        for (lb, la) in before.layers().iter().zip(network.layers()) {
            match (lb, la) {
                (
                    Layer::Conv2d {
                        weight: wb, bias: bb, ..
                    },
                    Layer::Conv2d {
                        weight: wa, bias: ba, ..
                    },
                )
                | (Layer::Dense { weight: wb, bias: bb }, Layer::Dense { weight: wa, bias: ba }) => {
                    for (o, n) in wb.data().iter().zip(wa.data()) {
                        ensure!(
                            n.to_bits() == (o - lr * (decay * o)).to_bits(),
                            "{act}: weight {o} became {n}"
                        );
                        shrunk += 1;
                    }
                    ensure!(bits(bb) == bits(ba), "{act}: bias moved");
                }
                _ => {
                    let same = lb.params().iter().zip(la.params()).all(|(a, b)| bits(a) == bits(b));
                    ensure!(same, "{act}: activation parameters moved");
                }
            }
        }
    }
    Ok(format!(
        "{shrunk} weights shrank by exactly lr*decay*w; activations untouched"
    ))
}

/// Least-squares fit of `w * feature + d`; returns the mean squared residual.
fn affine_fit_mse(feature: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let (mf, my) = (feature.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sff: f64 = feature.iter().map(|f| (f - mf) * (f - mf)).sum();
    let sfy: f64 = feature.iter().zip(y).map(|(f, v)| (f - mf) * (v - my)).sum();
    let w = if sff > 1e-300 { sfy / sff } else { 0.0 };
    feature
        .iter()
        .zip(y)
        .map(|(f, v)| (w * (f - mf) + my - v).powi(2))
        .sum::<f64>()
        / n
}

/// Smallest MSE any `w * relu(v * x + c) + d` reaches on `set`. The scale of
/// `v` folds into `w`, so the search runs over the kink position and the side
/// the ramp faces; a coarse grid is refined around the best kink.
fn relu_floor(set: &SyntheticSet) -> f64 {
    let xs = set.x.data();
    let ys = set.y.data();
    let at = |kink: f64, dir: f64| {
        let f: Vec<f64> = xs.iter().map(|&x| (dir * (x - kink)).max(0.0)).collect();
        affine_fit_mse(&f, ys)
    };
    let mut best = (f64::INFINITY, 0.0, 1.0);
    for dir in [1.0, -1.0] {
        for i in 0..=8000 {
            let kink = -4.0 + i as f64 * 1e-3;
            let m = at(kink, dir);
            if m < best.0 {
                best = (m, kink, dir);
            }
        }
    }
    let (_, centre, dir) = best;
    for i in 0..=2000 {
        let kink = centre - 1e-3 + i as f64 * 1e-6;
        best.0 = best.0.min(at(kink, dir));
    }
    best.0
}

/// Floors of the default probe sets, computed by `relu_floor` and pinned.
const RELU_TRAIN_FLOOR: f64 = 5.57257020051301e-2;
const RELU_TEST_FLOOR: f64 = 6.068969685578822e-2;

fn probe_mse(target: &str, act: &str) -> Result<(f64, f64), String> {
    let out = run_ok(&["capacity", target, act])?;
    let grab = |key: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| format!("no `{key}` in:\n{out}"))
    };
    Ok((grab("train mse")?, grab("test mse")?))
}

fn capacity() -> Check {
    let opts = CapacityOptions::new(SyntheticTarget::ClampSCurve, "relu".parse().unwrap());
    let train_set = gen_synthetic(&SyntheticSpec::new(opts.target, opts.train_samples, opts.seed)).unwrap();
    let test_set = gen_synthetic(&SyntheticSpec::new(opts.target, opts.test_samples, opts.seed + 1)).unwrap();
    let (train_floor, test_floor) = (relu_floor(&train_set), relu_floor(&test_set));
    ensure!(
        (train_floor - RELU_TRAIN_FLOOR).abs() <= 1e-12 && (test_floor - RELU_TEST_FLOOR).abs() <= 1e-12,
        "floor oracle drifted: {train_floor:e} / {test_floor:e}"
    );

    let (_, clamp) = probe_mse("clamp_s_curve", "srelu")?;
    ensure!(clamp < 1e-4, "srelu on clamp_s_curve: test mse {clamp:e}");
    let (_, hinge) = probe_mse("convex_hinge", "srelu")?;
    ensure!(hinge < 1e-4, "srelu on convex_hinge: test mse {hinge:e}");
    let (relu_train, relu_test) = probe_mse("clamp_s_curve", "relu")?;
    // The grid floor can only overshoot the true minimum by rounding.
    let slack = |floor: f64| floor * (1.0 - 1e-9);
    ensure!(
        relu_train >= slack(RELU_TRAIN_FLOOR) && relu_test >= slack(RELU_TEST_FLOOR),
        "relu beat the floor: {relu_train:e} / {relu_test:e}"
    );
    Ok(format!(
        "srelu clamp {clamp:.1e}, hinge {hinge:.1e}; relu {relu_test:.4e} >= floor {RELU_TEST_FLOOR:.4e}"
    ))
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("SRELU_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        format!("dataset = mnist\ndata_dir = {}\n{body}", mnist_dir().display()),
    )
    .unwrap();
    path
}

/// Test error after the last epoch, read back from `metrics.csv`.
fn final_test_error(out: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    text.lines()
        .rfind(|l| l.split(',').nth(1) == Some("test"))
        .and_then(|l| l.split(',').nth(3)?.parse().ok())
        .ok_or_else(|| format!("no test record in\n{text}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn mnist_trend() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let mut errors = std::collections::BTreeMap::new();
    for act in ["relu", "srelu"] {
        for seed in 1..=3 {
            let dir = tmp.path().join(format!("{act}-{seed}"));
            std::fs::create_dir_all(&dir).unwrap();
            let cfg = write_config(
                &dir,
                &format!("preset = cnn-small\nactivation = {act}\ntrain_subset = 5000\nepochs = 3\nseed = {seed}\n"),
            );
            let out = dir.join("out");
            run_ok(&[
                "train",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])?;
            errors.entry(act).or_insert_with(Vec::new).push(final_test_error(&out)?);
        }
    }
    let show = |v: &[f64]| {
        v.iter()
            .map(|e| format!("{:.2}", 100.0 * e))
            .collect::<Vec<_>>()
            .join("/")
    };
    let (relu, srelu) = (median(errors["relu"].clone()), median(errors["srelu"].clone()));
    let detail = format!(
        "median test error srelu {:.2}% ({}) vs relu {:.2}% ({})",
        100.0 * srelu,
        show(&errors["srelu"]),
        100.0 * relu,
        show(&errors["relu"])
    );
    ensure!(srelu <= relu + 0.003, "{detail}");
    Ok(detail)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "preset = cnn-small\nactivation = srelu\ntrain_subset = 600\ntest_subset = 300\nepochs = 2\nfreeze_epochs = 1\nprecision = f64\nseed = 5\n",
    );
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for out in &outs {
        run_ok(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
    }
    for file in ["metrics.csv", "model.ckpt", "srelu_params.csv"] {
        let a = std::fs::read(outs[0].join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outs[1].join(file)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{file} differs between runs");
    }
    Ok("metrics.csv, model.ckpt and srelu_params.csv byte-identical".into())
}
