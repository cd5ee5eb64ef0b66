//! Transient simulation and optimal compressor control for gas pipeline
//! networks coupled to AC power grids through gas-fired plants.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches
//! files or the terminal lives in the `gasgrid` companion crate.
//!
//! Layers, bottom up:
//!
//! * [`model`]: static network description, validation, nodal admittance.
//! * [`gas`]: pressure law, friction, flux and the implicit box scheme on one pipe.
//! * [`power`]: AC powerflow residuals, Jacobians and the plant gas offtake.
//! * [`compressor`]: shaft-power surrogate and the cost rate.
//! * [`sim`]: the coupled per-step system, damped Newton, steady initialization.
//! * [`adjoint`]: backward adjoint sweep and total control gradients.
//! * [`opt`]: log-barrier optimal control with limited-memory quasi-Newton steps.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adjoint;
pub mod compressor;
mod error;
pub mod fixture;
pub mod gas;
pub mod model;
pub mod opt;
pub mod power;
pub mod sim;
pub mod sparse;

pub use error::{Error, Result};

/// One bar in Pascal.
pub const BAR: f64 = 1.0e5;
/// Seconds per hour.
pub const HOUR: f64 = 3600.0;
