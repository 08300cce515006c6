//! Optimal learning control with Gaussian-process beliefs.

pub mod augmented;
pub mod baselines;
pub mod belief;
pub mod env;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod policy;
pub mod value;

pub use error::{Error, Result};
