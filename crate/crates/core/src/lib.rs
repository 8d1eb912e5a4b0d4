//! Symbiotic radio link simulation: exact and asymptotic rates, transmit
//! covariance optimization under a backscatter sum-rate constraint, and the
//! experiment drivers built on them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod channel;
pub mod cli;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod linalg;
pub mod precoder;
pub mod rates;

pub use error::{Error, Result};
pub use exec::Execution;
