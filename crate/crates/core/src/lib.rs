//! Calibrated forms, comass estimation, Whitney-type vanishing functions and
//! a numerical laboratory for desingularized calibrations.

pub mod cli;
pub mod comass;
pub mod config;
pub mod desing;
pub mod error;
pub mod exterior;
pub mod fractal;
mod jet;
pub mod whitney;

pub use error::{Error, Result};
