//! SReLU: S-shaped rectified linear units with learnable per-channel
//! thresholds and slopes, a small feedforward network toolkit to train them,
//! and independent oracles that check every gradient.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod data;
pub mod error;
pub mod network;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{DType, Rng, RngState, Scalar, Tensor};
