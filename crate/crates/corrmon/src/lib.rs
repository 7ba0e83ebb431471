//! Remote monitoring of correlated Gaussian sources under a one-sensor-per-
//! slot constraint.
//!
//! A scheduler picks one of `M` correlated scalar processes to observe each
//! time slot; a Kalman filter tracks the rest through the correlation
//! structure. This crate provides:
//!
//! - the system model and noise sampling ([`model`]),
//! - the scheduled Kalman covariance recursion ([`kalman`]),
//! - scheduling policies, from age-based heuristics to Whittle-style
//!   indices ([`policies`]),
//! - per-step error sandwiches and long-run scaling bounds ([`bounds`]),
//! - brute-force and analytic verification oracles ([`oracle`]),
//! - the experiment harness and CSV/config plumbing behind the `corrmon`
//!   binary ([`harness`]).

pub mod bounds;
pub mod error;
pub mod harness;
pub mod kalman;
pub mod model;
pub mod oracle;
pub mod policies;

pub use error::{Error, Result};
