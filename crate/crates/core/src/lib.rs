//! Design-space mapping and navigation.
//!
//! An expensive ground-truth model `f: decisions → performance` is sampled
//! with a Sobol design of experiments, screened with variance-based
//! sensitivity analysis, and approximated by a shallow Bayesian belief
//! network whose complete bipartite structure can be queried both forward
//! (predict performance from decisions) and backward (derive decisions from
//! desired performance). A local linear navigator built from a
//! finite-difference Jacobian, its SVD and Moore-Penrose pseudo-inverse is the
//! analytic counterpart.

// `!(x >= lo)` style guards are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod bbn;
pub mod dataset;
pub mod discretize;
pub mod error;
mod joe_kuo;
pub mod linalg;
pub mod pipeline;
pub mod sensitivity;
pub mod simulator;
pub mod sobol;
pub mod space;
pub mod validation;

pub use error::{Error, Result};
