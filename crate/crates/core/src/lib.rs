//! Stochastic AUC maximization through the min-max (saddle-point) square-loss
//! reformulation, for nonlinear scorers.
//!
//! The optimizers in [`optimizers`] solve
//! `min_(w,a,b) max_α E[F(w, a, b, α; z)]` (see [`objective`]) with
//! stagewise proximal primal-dual methods, alongside baselines. [`plcheck`]
//! audits the Polyak-Łojasiewicz inequality numerically.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod optimizers;
pub mod parallel;
pub mod plcheck;
pub mod streaming;

pub use error::{Error, Result};
