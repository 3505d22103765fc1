//! Simulation and ergodicity diagnostics for jump diffusions whose jump
//! rates depend on the position.
//!
//! The crate simulates a time-inhomogeneous jump process and its
//! time-homogeneous limit by Poisson thinning, couples two copies of the
//! limit through regenerations at big jumps, and estimates the distances
//! (total variation, smooth test-function classes) that measure how fast
//! laws converge.

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod generator;
pub mod model;
pub mod models;
pub mod rng;
pub mod simulate;
pub mod util;

pub use error::{Error, Result};
