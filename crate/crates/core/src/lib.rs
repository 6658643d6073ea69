//! Latent ALE-grid surrogate for two-way fluid–solid interaction, with a
//! classical partitioned reference solver for ground-truth data.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod pcm;
pub mod projection;
pub mod reference_solver;
pub mod tensor_core;

pub use error::{Error, Result};
