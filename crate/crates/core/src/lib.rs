//! Pricing of American basket options with Gaussian process regression
//! surrogates, with an optional European control variate.

pub mod american;
pub mod error;
pub mod european;
pub mod gpr;
pub mod linalg;
pub mod lowdiscrepancy;
pub mod market;
pub mod oracles;
pub mod stats;

pub use error::{Error, Result};
