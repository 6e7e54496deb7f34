use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One label byte followed by 3x32x32 channel-major pixel bytes.
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

fn read_records(path: &Path, labels: &mut Vec<usize>, pixels: &mut Vec<u8>) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::format(
            path,
            format!(
                "{} bytes is not a whole number of {CIFAR_RECORD_LEN}-byte records",
                bytes.len()
            ),
        ));
    }
    for rec in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        if rec[0] >= 10 {
            return Err(Error::format(path, format!("label {} outside 0..10", rec[0])));
        }
        labels.push(rec[0] as usize);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(())
}

fn load_split<T: Scalar>(dir: &Path, name: &str, files: &[&str]) -> Result<Dataset<T>> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for f in files {
        read_records(&dir.join(f), &mut labels, &mut pixels)?;
    }
    let data = pixels.into_iter().map(|p| T::cast(f64::from(p) / 255.0)).collect();
    let images = Tensor::from_vec(&[labels.len(), 3, 32, 32], data)?;
    Dataset::new(name, images, labels, 10)
}

/// Reads `data_batch_1..5.bin` and `test_batch.bin` from `dir`, pixels in `[0, 1]`.
/// Mean subtraction is left to [`super::subtract_channel_mean`].
pub fn load_cifar10<T: Scalar>(dir: impl AsRef<Path>) -> Result<(Dataset<T>, Dataset<T>)> {
    let dir = dir.as_ref();
    for f in TRAIN_FILES.iter().chain([&TEST_FILE]) {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::format(p, "CIFAR-10 batch file is missing"));
        }
    }
    Ok((
        load_split(dir, "cifar10-train", &TRAIN_FILES)?,
        load_split(dir, "cifar10-test", &[TEST_FILE])?,
    ))
}
