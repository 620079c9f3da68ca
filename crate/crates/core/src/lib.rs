//! Optimal sediment replenishment for a dam-downstream river reach whose
//! storage is only observed at Poisson times.
//!
//! The crate is organized around the pieces of the control problem:
//!
//! - [`regime`]: the continuous-time Markov chain of river discharge
//!   (estimation from a discharge record, stationary law, path sampling).
//! - [`transport`]: Meyer-Peter-Müller bedload rates per regime, normalized
//!   to the unit storage domain.
//! - [`analytic`]: closed-form single-regime solutions (discounted,
//!   vanishing-discount and complete-information limits).
//! - [`pde`]: WENO3 pseudo-time solver for the regime-coupled optimality
//!   equation and free-boundary extraction.
//! - [`mc`]: exact event-driven simulation of the controlled storage and
//!   Monte Carlo cost estimation.
//! - [`cli`]: the `replenish` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod error;
pub mod mc;
pub mod pde;
pub mod regime;
pub mod transport;

pub use error::{Error, Result};
