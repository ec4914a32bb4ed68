//! Forward simulation and parameter extraction for a Rydberg atom coupled by a
//! two-photon transition to a single mode of a superconducting CPW resonator.
//!
//! The crate is split along the physical chain of the experiment:
//!
//! - [`resonator`]: a damped, driven cavity mode. Pulse sequences are
//!   propagated through the mode using the slowly-varying envelope of the
//!   intracavity field.
//! - [`bloch`]: the ensemble-average two-level atom, driven by the squared
//!   cavity field in a frame rotating at twice the carrier.
//! - [`analytic`]: closed-form detuned, damped Rabi populations.
//! - [`experiment`]: Rabi pulse-length scans and cavity-enhanced Ramsey
//!   frequency scans built on top of the two simulators.
//! - [`fitting`]: error-weighted Levenberg–Marquardt fits of both experiments
//!   plus seeded synthetic data for validating them.
//!
//! All angular frequencies are in rad/s and all times in seconds.

pub mod analytic;
pub mod bloch;
mod error;
pub mod experiment;
pub mod fitting;
pub mod resonator;
pub mod units;

pub use error::{Error, Result};

pub use num_complex::Complex64;
