//! Polygonal distributions: finite mixtures of triangular densities on `[0, 1]`.
//!
//! The crate covers exact evaluation and sampling ([`dist`]), divergences
//! between densities ([`divergence`]), maximum-likelihood fitting by EM
//! ([`fit`]), constructive approximation of concave functions ([`approx`]),
//! penalized order selection with slope-heuristic calibration ([`select`]),
//! and the seeded simulation experiments behind the CLI ([`harness`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod dist;
pub mod divergence;
pub mod error;
pub mod fit;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod select;
pub mod targets;

pub use error::{Error, Result};
