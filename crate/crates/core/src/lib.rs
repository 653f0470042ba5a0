//! Renormalization-group analysis of the weakly self-avoiding walk on the
//! four-dimensional hierarchical lattice.
//!
//! - [`hierlattice`]: group arithmetic, norms, the Lévy jump law;
//! - [`freegreen`]: exact free Green's functions and the fluctuation covariance;
//! - [`grassmann`]: differential-form calculus, supersymmetric Gaussian integration;
//! - [`perturbation`]: exact second-order perturbation theory on one block;
//! - [`rgflow`]: coupling flow, critical trajectory, Green's-function prediction;
//! - [`walkmc`]: Monte Carlo walk simulator used as an independent oracle;
//! - [`verify`]: named identity suites with pass/fail reports.

pub mod error;
pub mod freegreen;
pub mod grassmann;
pub mod hierlattice;
pub mod perturbation;
pub mod quad;
pub mod rgflow;
pub mod scalar;
pub mod verify;
pub mod walkmc;

pub use error::{Error, Result};
