//! Direction-of-arrival estimation from a single snapshot of an antenna
//! array made of mutually non-coherent sub-arrays.
//!
//! The observations of all sub-arrays are lifted to a row-sparse rank-one
//! matrix recovered by convex optimisation ([`solver`]). DOAs are read off
//! the leading left singular vector, or the leading right singular vector
//! is used to estimate the sub-array phase offsets, re-align the
//! observations and run a coherent L1 recovery ([`pipeline`]). Reference
//! estimators live in [`baselines`] and the Monte Carlo engine in
//! [`harness`].

pub mod array_model;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
