use std::path::PathBuf;

use proptest::prelude::*;
use srelu::data::{load_cifar10, load_mnist, split_indices, subtract_channel_mean, CIFAR_RECORD_LEN};

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

#[test]
fn bundled_mnist_subset_loads_in_unit_range() {
    let (train, test) = load_mnist::<f32>(mnist_dir()).unwrap();
    assert_eq!(train.sample_shape(), &[1, 28, 28]);
    assert_eq!((train.len(), test.len()), (6000, 4000));
    for d in [&train, &test] {
        assert!(d.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(d.labels.iter().all(|&l| l < 10));
        // every digit is present
        for digit in 0..10 {
            assert!(d.labels.contains(&digit));
        }
    }
}

#[test]
fn rereading_is_bitwise_identical() {
    let (a, _) = load_mnist::<f64>(mnist_dir()).unwrap();
    let (b, _) = load_mnist::<f64>(mnist_dir()).unwrap();
    assert_eq!(a.labels, b.labels);
    assert!(a
        .images
        .data()
        .iter()
        .zip(b.images.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn mean_subtraction_centres_the_training_split() {
    let (mut train, mut test) = load_mnist::<f64>(mnist_dir()).unwrap();
    let means = subtract_channel_mean(&mut train, &mut test).unwrap();
    assert_eq!(means.len(), 1);
    assert!(means[0] > 0.05 && means[0] < 0.3);
    assert!(train.channel_means().unwrap()[0].abs() < 1e-6);
}

#[test]
fn cifar_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut expected = Vec::new();
    for (f, name) in [
        "data_batch_1",
        "data_batch_2",
        "data_batch_3",
        "data_batch_4",
        "data_batch_5",
        "test_batch",
    ]
    .iter()
    .enumerate()
    {
        let mut bytes = Vec::new();
        for r in 0..3 {
            let label = (f * 3 + r) % 10;
            bytes.push(label as u8);
            bytes.extend((0..CIFAR_RECORD_LEN - 1).map(|i| ((i * 7 + f * 13 + r) % 256) as u8));
            expected.push(label);
        }
        std::fs::write(dir.path().join(format!("{name}.bin")), bytes).unwrap();
    }
    let (train, test) = load_cifar10::<f64>(dir.path()).unwrap();
    assert_eq!(train.sample_shape(), &[3, 32, 32]);
    assert_eq!(train.len() + test.len(), 18);
    assert_eq!(train.labels, expected[..15].to_vec());
    assert_eq!(test.labels, expected[15..].to_vec());
    // first pixel of the green plane of the first record
    assert_eq!(train.images.data()[1024], ((1024 * 7) % 256) as f64 / 255.0);
}

#[test]
fn split_is_deterministic_and_disjoint_for_100_seeds() {
    for seed in 0..100u64 {
        let n = 50 + (seed as usize * 37) % 400;
        let (train, val) = split_indices(n, 0.2, seed).unwrap();
        assert_eq!(split_indices(n, 0.2, seed).unwrap(), (train.clone(), val.clone()));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert_eq!(val.len(), (0.2 * n as f64).round() as usize);
    }
}

proptest! {
    #[test]
    fn different_seeds_usually_differ(seed in any::<u64>()) {
        let a = split_indices(200, 0.5, seed).unwrap();
        let b = split_indices(200, 0.5, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a, b);
    }
}
