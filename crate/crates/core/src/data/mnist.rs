use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

const FILES: [(&str, &str, &str); 2] = [
    ("mnist-train", "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("mnist-test", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// `(count, rows, cols, pixels)` of an IDX3 image file.
fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    if bytes.len() < 16 {
        return Err(Error::format(path, "file shorter than the IDX image header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            path,
            format!("image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let expected = n * rows * cols;
    if bytes.len() - 16 != expected {
        return Err(Error::format(
            path,
            format!(
                "header promises {n} images of {rows}x{cols} ({expected} bytes) but {} bytes follow",
                bytes.len() - 16
            ),
        ));
    }
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "file shorter than the IDX label header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(
            path,
            format!("label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() - 8 != n {
        return Err(Error::format(
            path,
            format!("header promises {n} labels but {} bytes follow", bytes.len() - 8),
        ));
    }
    let labels: Vec<usize> = bytes[8..].iter().map(|&b| b as usize).collect();
    if let Some(bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::format(path, format!("label {bad} outside 0..10")));
    }
    Ok(labels)
}

/// Reads the four standard IDX files from `dir`; pixels are scaled to `[0, 1]`.
/// Sample counts come from the headers, so reduced subsets load as well.
pub fn load_mnist<T: Scalar>(dir: impl AsRef<Path>) -> Result<(Dataset<T>, Dataset<T>)> {
    let dir = dir.as_ref();
    let mut out = Vec::with_capacity(2);
    for (name, img_file, lbl_file) in FILES {
        let img_path = dir.join(img_file);
        let lbl_path = dir.join(lbl_file);
        let (n, rows, cols, pixels) = parse_images(&img_path, &read(&img_path)?)?;
        let labels = parse_labels(&lbl_path, &read(&lbl_path)?)?;
        if labels.len() != n {
            return Err(Error::format(
                &lbl_path,
                format!("{} labels for {n} images in {}", labels.len(), img_path.display()),
            ));
        }
        let data = pixels.into_iter().map(|p| T::cast(f64::from(p) / 255.0)).collect();
        let images = Tensor::from_vec(&[n, 1, rows, cols], data)?;
        out.push(Dataset::new(name, images, labels, 10)?);
    }
    let test = out.pop().expect("two splits");
    let train = out.pop().expect("two splits");
    Ok((train, test))
}
