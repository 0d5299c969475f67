//! Proxy-based temperature reconstruction and its stress tests: penalized and
//! principal-component regressions, composite-plus-scale, holdout-block
//! cross-validation against pseudoproxy null benchmarks, and a Bayesian
//! autoregressive backcast with an uncertainty decomposition.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod pcselect;
pub mod pseudoproxy;
pub mod rng;
pub mod solvers;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use rng::Seed;
