//! Bayesian Cramér-Rao-type lower bounds on mean-squared error.
//!
//! The crate evaluates the Bayesian CRB, the expected CRB, weighted bounds
//! (given a weight, grid-optimized, suboptimal, and the asymptotically tight
//! choice) for scalar and vector parameters, and compares them with Monte-Carlo
//! MSE of MAP and ML estimators. Models plug in through [`ScalarModel`] and
//! [`VectorModel`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds_scalar;
pub mod bounds_vector;
pub mod error;
pub mod estimators;
pub mod model;
pub mod models;
pub mod numerics;
pub mod parallel;
pub mod wbcrb_opt;

pub use error::{Error, Result};
pub use model::{ScalarModel, VectorModel};
