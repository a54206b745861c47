//! Regression-spline monotonicity tests with Gaussian and method-of-moments
//! orthant priors on the spline's derivative values.

pub mod basis;
pub mod gibbs;
pub mod prior;

pub use basis::KnotBasis;
pub use gibbs::{run_chain, run_sampler, ChainSummary, SplineState};
pub use prior::{PriorKind, SplinePriorConfig};

use crate::data::Dataset;
use crate::error::Result;
use crate::result::MonotonicityResult;

/// Runs the sampler with `prior.n_knots` equally spaced knots.
pub fn test_monotonicity(data: &Dataset, prior: &SplinePriorConfig) -> Result<MonotonicityResult> {
    run_sampler(data, &KnotBasis::equally_spaced(prior.n_knots), prior)
}
