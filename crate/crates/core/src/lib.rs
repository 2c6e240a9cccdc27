// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Semicycle-length analysis for `x''(t) + p(t) x(t - tau(t)) = 0`.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod poly;
pub mod repro;
pub mod signals;
pub mod spectral;
pub mod thresholds;

pub use error::{Error, Result};
