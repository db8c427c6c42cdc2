//! Numerical toolkit for quasi curvature-dimension conditions on weighted
//! intervals, their spectral consequences, and the Heisenberg group.

pub mod coefficients;
pub mod cli;
pub mod constants;
pub mod density;
pub mod envelope;
pub mod error;
pub mod heisenberg;
pub mod io;
pub mod localization;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
