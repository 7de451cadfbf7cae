//! Simulation and localized moment inference for locally stationary,
//! Lévy-driven linear state space models.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod expr;
pub mod kernels;
pub mod linalg;
pub mod noise;
pub mod observation;
pub mod quadrature;
pub mod rng;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
