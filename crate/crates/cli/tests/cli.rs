use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn srelu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srelu")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

/// A small MNIST run config inside `dir`; `extra` must not repeat its keys.
fn config(dir: &Path, epochs: usize, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        format!(
            "dataset = mnist\ndata_dir = {}\ntrain_subset = 300\nepochs = {epochs}\nfreeze_epochs = 1\n{extra}",
            mnist_dir().display()
        ),
    )
    .unwrap();
    path
}

fn train(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    srelu(&args)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_metrics_checkpoint_and_parameter_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = train(&config(tmp.path(), 2, "test_subset = 200\n"), &out, &[]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    for file in ["metrics.csv", "model.ckpt", "srelu_params.csv", "input_profile.csv"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert!(lines[0].starts_with("epoch,split,loss,error,seconds"));
    // two epochs, train and test each
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(4) == Some("0")));
}

#[test]
fn relu_runs_skip_the_srelu_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = train(
        &config(tmp.path(), 1, "test_subset = 200\n"),
        &out,
        &["--activation", "relu"],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(out.join("model.ckpt").is_file());
    assert!(!out.join("srelu_params.csv").exists());
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = srelu(&["train", "--data-dir", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains(s(&missing)), "{}", text(&o.stderr));
}

#[test]
fn config_errors_exit_1_with_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "epochs = 2\nlr = fast\n").unwrap();
    let o = srelu(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("line 2"), "{}", text(&o.stderr));

    assert_eq!(srelu(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(srelu(&["train", "--activation", "tanh"]).status.code(), Some(1));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 2, "test_subset = 200\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(train(&cfg, &a, &["--seed", "9"]).status.success());
    assert!(train(&cfg, &b, &["--seed", "9"]).status.success());
    for file in ["metrics.csv", "model.ckpt"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let c = tmp.path().join("c");
    assert!(train(&cfg, &c, &["--seed", "10"]).status.success());
    assert_ne!(
        std::fs::read(a.join("model.ckpt")).unwrap(),
        std::fs::read(c.join("model.ckpt")).unwrap()
    );
}

fn last_error(metrics: &Path, split: &str) -> f64 {
    let body = std::fs::read_to_string(metrics).unwrap();
    body.lines()
        .rfind(|l| l.split(',').nth(1) == Some(split))
        .and_then(|l| l.split(',').nth(3)?.parse().ok())
        .unwrap_or_else(|| panic!("no {split} record in\n{body}"))
}

#[test]
fn eval_on_the_training_split_reproduces_training_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 2, "test_subset = 200\n");
    let out = tmp.path().join("run");
    assert!(train(&cfg, &out, &[]).status.success());
    let o = srelu(&[
        "eval",
        s(&out.join("model.ckpt")),
        "--config",
        s(&cfg),
        "--split",
        "train",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("train error"));
    let metrics = out.join("metrics.csv");
    assert!(last_error(&metrics, "eval-train") <= last_error(&metrics, "train") + 1e-9);

    let o = srelu(&["eval", s(&out.join("model.ckpt")), "--config", s(&cfg)]);
    assert!(o.status.success());
    assert_eq!(last_error(&metrics, "eval-test"), last_error(&metrics, "test"));
}

#[test]
fn untrained_networks_guess() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 0, "test_subset = 2000\n");
    let mut errors = Vec::new();
    for seed in 1..=5 {
        let out = tmp.path().join(format!("s{seed}"));
        assert!(train(&cfg, &out, &["--seed", &seed.to_string()]).status.success());
        let metrics = tmp.path().join(format!("m{seed}.csv"));
        let o = srelu(&[
            "eval",
            s(&out.join("model.ckpt")),
            "--config",
            s(&cfg),
            "--metrics",
            s(&metrics),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        errors.push(last_error(&metrics, "eval-test"));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!((mean - 0.9).abs() <= 0.02, "{errors:?}");
}

#[test]
fn eval_rejects_a_mismatched_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(train(&config(tmp.path(), 0, "test_subset = 200\n"), &out, &[])
        .status
        .success());
    let cifar = tmp.path().join("cifar");
    std::fs::create_dir_all(&cifar).unwrap();
    let mut record = vec![3u8];
    record.extend(std::iter::repeat_n(100u8, 3072));
    for name in [
        "data_batch_1",
        "data_batch_2",
        "data_batch_3",
        "data_batch_4",
        "data_batch_5",
        "test_batch",
    ] {
        std::fs::write(cifar.join(format!("{name}.bin")), &record).unwrap();
    }
    let o = srelu(&[
        "eval",
        s(&out.join("model.ckpt")),
        "--dataset",
        "cifar10",
        "--data-dir",
        s(&cifar),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
}

#[test]
fn gradcheck_passes_and_names_an_injected_fault() {
    let o = srelu(&["gradcheck", "--samples", "200"]);
    assert!(o.status.success(), "{}", text(&o.stdout));
    let o = srelu(&[
        "gradcheck",
        "--preset",
        "activations",
        "--samples",
        "100",
        "--inject-fault",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(text(&o.stderr).contains("srelu.a_l"), "{}", text(&o.stderr));
}

#[test]
fn capacity_prints_both_errors() {
    let o = srelu(&["capacity", "convex_hinge", "relu", "--steps", "2000"]);
    assert!(o.status.success());
    let out = text(&o.stdout);
    assert!(out.contains("train mse") && out.contains("test mse"), "{out}");
    assert_eq!(srelu(&["capacity", "sine"]).status.code(), Some(1));
}

#[test]
fn inspect_params_reads_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(train(&config(tmp.path(), 1, "test_subset = 200\n"), &out, &[])
        .status
        .success());
    let csv = tmp.path().join("means.csv");
    let o = srelu(&["inspect-params", s(&out.join("model.ckpt")), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("t_r"));
    assert_eq!(
        std::fs::read(&csv).unwrap(),
        std::fs::read(out.join("srelu_params.csv")).unwrap()
    );

    let junk = tmp.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(srelu(&["inspect-params", s(&junk)]).status.code(), Some(2));
}

#[test]
fn split_writes_disjoint_index_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = srelu(&[
        "split",
        "--count",
        "100",
        "--fraction",
        "0.25",
        "--seed",
        "3",
        "--out",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let read = |name: &str| -> Vec<usize> {
        let body = std::fs::read_to_string(tmp.path().join(name)).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("index"));
        lines.map(|l| l.parse().unwrap()).collect()
    };
    let (train, val) = (read("train_idx.csv"), read("val_idx.csv"));
    assert_eq!(val.len(), 25);
    let mut all: Vec<usize> = train.into_iter().chain(val).collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}
