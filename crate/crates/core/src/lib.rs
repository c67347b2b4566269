//! Deviation certificates for linear combinations of independent heavy-tailed
//! random variables.
//!
//! The crate evaluates the bounds and envelopes of a deviation
//! inequality for variables with power-type tails, and checks each of them
//! against a deterministic parallel Monte Carlo harness that also calibrates
//! the constants the inequalities leave unspecified.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod certificates;
pub mod distributions;
pub mod error;
pub mod montecarlo;
pub mod norms;
pub mod numeric;
pub mod order_stats;
pub mod special;

pub use error::{Error, Result};
