//! Stopped Brownian-increment tamed Euler schemes for SDEs with superlinearly
//! growing coefficients, together with a reproducible Monte Carlo harness for
//! strong convergence rates, moment bounds and divergence comparisons.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod models;
mod rng;
pub mod schemes;
mod serde_float;
pub mod stats;
pub mod taming;
pub mod types;

pub use error::{Error, Result};
pub use schemes::SchemeKind;
pub use types::{ErrorRow, ErrorTable, GridSpec, LyapunovSpec, RateFit, SchemeRun, SdeModel};
