//! Numerical laboratory for the stochastic heat equation with multiplicative
//! space-time white noise on a truncated line.
//!
//! The crate provides exponentially weighted metrics, heat-kernel actions and
//! their weighted estimates, direct and factorized stochastic convolutions, an
//! exponential-Euler mild solver for Girsanov-coupled solution pairs, and
//! Monte Carlo estimators that turn transportation-cost and moment
//! inequalities into constant-estimation experiments.

pub mod convolution;
pub mod error;
pub mod estimators;
pub mod fft;
pub mod grid;
pub mod heatkernel;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{FieldPath, GridSpec, WeightedMetricParams};
