//! Bayesian tests for monotonicity of a regression function.

pub mod bonferroni;
pub mod config;
pub mod data;
pub mod error;
pub mod frac_normal;
pub mod harness;
pub mod kernel_smooth;
pub mod numeric;
pub mod quadrature;
pub mod regression_spline;
pub mod result;
pub mod smoothing_spline;

pub use data::Dataset;
pub use error::{Error, Result};
