//! Simulation and stability analysis of a delayed baroreflex model of the
//! heart-rate response to the Valsalva maneuver.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod classifier;
pub mod dde;
pub mod models;
pub mod signal;
pub mod simulate;
pub mod sweep;
