//! Numerical toolkit for the homogenization of Navier-Stokes flow through
//! dilute periodic particle arrays with vanishing viscosity.
//!
//! The crate computes exterior Stokes cell solutions and resistance
//! matrices, builds the oscillating corrector on the four-region cell
//! decomposition, integrates the effective macroscopic systems on a periodic
//! box, classifies scaling regimes, and runs convergence-rate studies.

pub mod config;
pub mod corrector;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod harmonics;
pub mod limit_solvers;
pub mod quadrature;
pub mod regime;
pub mod spectral;
pub mod stokes_exterior;
pub mod verify;

pub use error::{Error, Result};
