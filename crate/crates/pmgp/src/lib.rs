//! Command-line tools, file formats and parallel drivers for pseudo-marginal
//! inference in Gaussian process classifiers. The numerics live in
//! [`pmgp_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod output;
pub mod parallel;

pub use error::{Error, Result};
pub use pmgp_core as core;
