use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Target functions for the one-dimensional capacity probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTarget {
    /// `clamp(x, -1, 1)`: S-shaped and non-convex.
    ClampSCurve,
    /// `max(0, x)`.
    ConvexHinge,
    Identity,
}

impl SyntheticTarget {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            SyntheticTarget::ClampSCurve => x.clamp(-1.0, 1.0),
            SyntheticTarget::ConvexHinge => x.max(0.0),
            SyntheticTarget::Identity => x,
        }
    }
}

impl fmt::Display for SyntheticTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticTarget::ClampSCurve => "clamp_s_curve",
            SyntheticTarget::ConvexHinge => "convex_hinge",
            SyntheticTarget::Identity => "identity",
        })
    }
}

impl FromStr for SyntheticTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp_s_curve" => Ok(SyntheticTarget::ClampSCurve),
            "convex_hinge" => Ok(SyntheticTarget::ConvexHinge),
            "identity" => Ok(SyntheticTarget::Identity),
            _ => Err(Error::invalid(format!(
                "unknown synthetic target {s:?} (expected clamp_s_curve, convex_hinge or identity)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub target: SyntheticTarget,
    pub samples: usize,
    pub lo: f64,
    pub hi: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Noise-free samples on `[-3, 3]`.
    pub fn new(target: SyntheticTarget, samples: usize, seed: u64) -> Self {
        SyntheticSpec {
            target,
            samples,
            lo: -3.0,
            hi: 3.0,
            noise_std: 0.0,
            seed,
        }
    }
}

/// Regression pairs, both `[N, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSet {
    pub x: Tensor<f64>,
    pub y: Tensor<f64>,
}

impl SyntheticSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.data().iter().copied().zip(self.y.data().iter().copied())
    }
}

/// `x ~ U[lo, hi)`, `y = target(x) + noise_std * N(0, 1)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSet> {
    if !(spec.lo < spec.hi) {
        return Err(Error::invalid(format!(
            "synthetic range needs lo < hi, got [{}, {}]",
            spec.lo, spec.hi
        )));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::invalid(format!(
            "noise std must be >= 0, got {}",
            spec.noise_std
        )));
    }
    let mut rng = Rng::seeded(spec.seed);
    let x = Tensor::rand_uniform(&[spec.samples, 1], spec.lo, spec.hi, &mut rng)?;
    let y: Vec<f64> = x
        .data()
        .iter()
        .map(|&v| {
            let clean = spec.target.eval(v);
            if spec.noise_std > 0.0 {
                clean + spec.noise_std * rng.standard_normal()
            } else {
                clean
            }
        })
        .collect();
    Ok(SyntheticSet {
        y: Tensor::from_vec(&[spec.samples, 1], y)?,
        x,
    })
}

/// CSV with header `x,y`; values use Rust's shortest round-trip formatting.
pub fn write_synthetic_csv(set: &SyntheticSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["x", "y"]).map_err(io)?;
    for (x, y) in set.pairs() {
        w.write_record([x.to_string(), y.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_synthetic_csv(path: impl AsRef<Path>) -> Result<SyntheticSet> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers != vec!["x", "y"] {
        return Err(Error::format(path, format!("expected header x,y, found {headers:?}")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let parse = |field: Option<&str>| -> Result<f64> {
            field
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::format(path, format!("row {}: expected two numbers", i + 2)))
        };
        xs.push(parse(rec.get(0))?);
        ys.push(parse(rec.get(1))?);
    }
    let n = xs.len();
    Ok(SyntheticSet {
        x: Tensor::from_vec(&[n, 1], xs)?,
        y: Tensor::from_vec(&[n, 1], ys)?,
    })
}
