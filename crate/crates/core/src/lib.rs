//! Preference learning as density estimation.
//!
//! Synthetic annotators compare pairs of outcomes under an explicit
//! generative process; policies and reward models are fit to those
//! comparisons with cross-entropy and its relatives, and the fitted densities
//! are compared against closed-form optima.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod exec;
pub mod learners;
pub mod optim;
pub mod pbde;
pub mod seed;
pub mod seq;

pub use error::{Error, Result};
