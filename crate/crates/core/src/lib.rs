//! Leaf-only-averaging (ALA) decision trees on sparse additive models.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! * [`models`]: sparse additive generative models and seeded sampling,
//! * [`geometry`]: cells, partitions, exact conditional moments, grid tessellations,
//! * [`trees`]: CART, honest relabeling, random forests and fixed-partition estimators,
//! * [`bounds`]: the bias-variance decomposition and the rate-distortion and
//!   covering lower bounds, plus the oracle tessellation upper bound.
//!
//! IO, configuration files and the experiment harness live in the `ala-lab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bounds;
mod error;
pub mod geometry;
pub mod math;
pub mod models;
pub mod optimize;
pub mod rng;
pub mod trees;

pub use crate::error::{Error, Result};
