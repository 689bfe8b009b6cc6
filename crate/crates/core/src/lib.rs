//! Desk-scale RF domain-adaptation laboratory.

pub mod dataspec;
pub mod error;
pub mod harness;
pub mod nnkernel;
pub mod seed;
pub mod sigsynth;
pub mod statfit;
pub mod tmetrics;
pub mod xfer;

pub use error::{Error, Result};
