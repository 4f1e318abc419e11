//! Time-fractional birth-death processes.
//!
//! The process `N_α(t)` is a birth-death chain on `{0, 1, 2, ...}` killed at
//! zero whose transition probabilities solve a Caputo-fractional backward
//! system of order `α ∈ (0, 1]`. The crate provides:
//!
//! * [`mlf`]: the Mittag-Leffler function on the real axis;
//! * [`stable`]: one-sided stable variates, the inverse stable subordinator and
//!   Mittag-Leffler waiting times;
//! * [`model`]: rate schedules, reversibility weights, classification series and
//!   truncated generators;
//! * [`paths`]: the renewal and time-change simulators with Monte Carlo
//!   aggregation;
//! * [`spectral`]: eigen-expansion of the truncated killed generator;
//! * [`quasi`]: quasi-limiting and quasi-stationary distributions;
//! * [`linear`]: closed forms for linear rates `λ_i = iλ`, `μ_i = iμ`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linear;
pub mod mlf;
pub mod model;
pub mod numeric;
pub mod paths;
pub mod quasi;
pub mod selfcheck;
pub mod spectral;
pub mod stable;

pub use error::{Error, Result};
pub use mlf::FracOrder;
