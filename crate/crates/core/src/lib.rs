//! Identification functions, their Osband transforms, and the estimation and
//! backtesting machinery built on top of them.

pub mod calibration;
pub mod catalog;
pub mod distributions;
pub mod error;
pub mod osband;
mod par;
pub mod quadrature;
pub mod verifier;
pub mod zestimate;

pub use error::{Error, Result};
