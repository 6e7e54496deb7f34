//! Binary checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! "SRLU" | u32 version | u64 checksum | payload
//! payload:
//!   u8  dtype tag (1 = f32, 2 = f64)
//!   u64 epoch
//!   u64 rng seed | u64 rng stream | u128 rng word position
//!   u32 spec length | spec text (UTF-8)
//!   u32 tensor count | per tensor: u8 dtype tag, u32 rank, u64 dims.., raw elements
//!   u32 srelu layer count | u8 frozen flag per SReLU layer
//! ```
//!
//! The checksum is the first eight bytes (little-endian) of the payload's SHA-256.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Network, NetworkSpec};
use crate::activation::ActivationInit;
use crate::error::{Error, Result};
use crate::tensor::{DType, RngState, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SRLU";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub rng: RngState,
    pub epoch: u64,
}

fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.push(T::DTYPE.tag());
        p.extend_from_slice(&self.epoch.to_le_bytes());
        p.extend_from_slice(&self.rng.seed.to_le_bytes());
        p.extend_from_slice(&self.rng.stream.to_le_bytes());
        p.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let spec = self.network.spec().to_string();
        p.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        p.extend_from_slice(spec.as_bytes());
        let params = self.network.params();
        p.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for t in params {
            p.push(T::DTYPE.tag());
            p.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                p.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut p);
            }
        }
        let srelu = self.network.srelu_layers();
        p.extend_from_slice(&(srelu.len() as u32).to_le_bytes());
        for (_, s) in srelu {
            p.push(u8::from(s.frozen));
        }

        let mut out = Vec::with_capacity(HEADER_LEN + p.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&checksum(&p).to_le_bytes());
        out.extend_from_slice(&p);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let expected = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let payload = &bytes[HEADER_LEN..];
        let computed = checksum(payload);
        if expected != computed {
            return Err(Error::Checksum { expected, computed });
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let dtype = DType::from_tag(r.u8()?).ok_or_else(|| Error::Corrupt("unknown dtype tag".into()))?;
        if dtype != T::DTYPE {
            return Err(Error::DtypeMismatch {
                found: dtype.name(),
                requested: T::DTYPE.name(),
            });
        }
        let epoch = r.u64()?;
        let rng = RngState {
            seed: r.u64()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes")),
        };
        let spec_len = r.u32()? as usize;
        let spec_text =
            std::str::from_utf8(r.take(spec_len)?).map_err(|_| Error::Corrupt("spec is not UTF-8".into()))?;
        let spec: NetworkSpec = spec_text.parse()?;

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let tag = r.u8()?;
            if DType::from_tag(tag) != Some(T::DTYPE) {
                return Err(Error::Corrupt("tensor dtype differs from checkpoint dtype".into()));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * T::DTYPE.size())?;
            let data = raw.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
            tensors.push(Tensor::from_vec(&shape, data)?);
        }
        let mut network = Network::from_params(&spec, ActivationInit::default(), tensors)?;

        let flags = r.u32()? as usize;
        let mut layers = network.srelu_layers_mut();
        if flags != layers.len() {
            return Err(Error::Corrupt("frozen flag count does not match SReLU layers".into()));
        }
        for (_, p) in layers.iter_mut() {
            p.frozen = r.u8()? != 0;
        }
        if r.pos != payload.len() {
            return Err(Error::Corrupt("trailing bytes after payload".into()));
        }
        Ok(Checkpoint { network, rng, epoch })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint<T: Scalar>(checkpoint: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn sample() -> Checkpoint<f32> {
        let spec: NetworkSpec =
            "input 1 6 6\nconv2d 1 3 3\nactivation srelu\nflatten\ndense 48 5\nactivation prelu\nloss softmax-xent 5\n"
                .parse()
                .unwrap();
        let mut rng = Rng::seeded(11);
        let mut network = Network::new(&spec, ActivationInit::default(), &mut rng).unwrap();
        network.srelu_layers_mut()[0].1.frozen = true;
        network.srelu_layers_mut()[0].1.t_r.data_mut()[1] = -0.375;
        Checkpoint {
            network,
            rng: rng.state(),
            epoch: 7,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn round_trip_preserves_forward_outputs() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ck, &path).unwrap();
        let back: Checkpoint<f32> = load_checkpoint(&path).unwrap();
        let x = Tensor::rand_uniform(&[4, 1, 6, 6], 0.0, 1.0, &mut Rng::seeded(3)).unwrap();
        assert_eq!(
            ck.network.forward(&x).unwrap().output(),
            back.network.forward(&x).unwrap().output()
        );
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = sample().to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(cut),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn bit_flip_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let last = bytes.len() - 20;
        bytes[last] ^= 0x10;
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn older_version_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 0, supported: 1 })
        ));
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bytes),
            Err(Error::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"SRLU");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let sum = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        assert_eq!(sum, checksum(&bytes[16..]));
    }
}
