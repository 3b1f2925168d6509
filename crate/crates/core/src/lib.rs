//! Reset-control approximation of complex-order controllers (CLOC).
//!
//! The crate is organised bottom-up:
//!
//! - [`linsys`]: factored transfer functions, state-space realization and the
//!   linear building blocks (PID, CRONE-style ladders, Oustaloup `s^alpha`).
//! - [`complexorder`]: the exact response of `s^(alpha + j beta)`.
//! - [`resetsys`]: reset elements (FORE, CgLp) and reset chains with a shaped
//!   reset signal.
//! - [`hosidf`]: higher-order sinusoidal-input describing functions.
//! - [`synthesis`]: shaping-filter fitting and the complete CLOC design flow.
//! - [`timesim`]: hybrid time-domain simulation of open and closed loops.
//! - [`config`] and [`design_file`]: the strict key-value text formats used by
//!   the command-line front end.
//! - [`export`]: CSV writers whose first line records the resolved parameters.

// Guards are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexorder;
pub mod config;
pub mod design_file;
pub mod error;
pub mod export;
pub mod hosidf;
pub mod linalg;
pub mod linsys;
pub mod resetsys;
pub mod synthesis;
pub mod timesim;

pub use error::{Error, Result};
pub use num_complex::Complex64;
