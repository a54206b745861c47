//! Benchmark functions, calibration of critical values, and the simulation
//! benchmark.

pub mod benchmark;
pub mod calibrate;
pub mod functions;
pub mod seeds;

use serde::{Deserialize, Serialize};

use crate::bonferroni::{run_bonferroni, BonferroniConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regression_spline::{test_monotonicity, PriorKind, SplinePriorConfig};
use crate::result::{Diagnostics, Method, MonotonicityResult};
use crate::smoothing_spline::{run_filter, SmoothingConfig};

/// Settings for every test; the `seed` fields are overwritten per dataset by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfigs {
    pub smoothing: SmoothingConfig,
    pub gauss: SplinePriorConfig,
    pub mom: SplinePriorConfig,
    pub bonferroni: BonferroniConfig,
}

impl MethodConfigs {
    /// Reduced particle and chain sizes for a single workstation.
    pub fn desk() -> Self {
        let chain = |prior: SplinePriorConfig| SplinePriorConfig {
            burn_in: 5_000,
            sweeps: 20_000,
            ..prior
        };
        Self {
            smoothing: SmoothingConfig {
                n_particles: 20_000,
                ..SmoothingConfig::default()
            },
            gauss: chain(SplinePriorConfig::gaussian()),
            mom: chain(SplinePriorConfig::mom()),
            bonferroni: BonferroniConfig {
                burn_in: 5_000,
                sweeps: 20_000,
                ..BonferroniConfig::default()
            },
        }
    }

    /// 10⁵ particles; 2·10⁴ burn-in and 10⁵ retained sweeps.
    pub fn full() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            gauss: SplinePriorConfig::gaussian(),
            mom: SplinePriorConfig::mom(),
            bonferroni: BonferroniConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        self.gauss.validate()?;
        self.mom.validate()?;
        self.bonferroni.validate()?;
        if self.gauss.prior_kind != PriorKind::Gaussian || self.mom.prior_kind != PriorKind::Mom {
            return Err(Error::Config("gauss and mom sections must keep their prior_kind".into()));
        }
        Ok(())
    }

    /// Runs `method` on `data` with its sampler seeded by `seed`.
    pub fn run(&self, method: Method, data: &Dataset, seed: u64) -> Result<MonotonicityResult> {
        match method {
            Method::Smoothing => run_filter(data, &SmoothingConfig { seed, ..self.smoothing.clone() }),
            Method::Gauss => test_monotonicity(data, &SplinePriorConfig { seed, ..self.gauss.clone() }),
            Method::Mom => test_monotonicity(data, &SplinePriorConfig { seed, ..self.mom.clone() }),
            Method::Bonferroni => run_bonferroni(data, &BonferroniConfig { seed, ..self.bonferroni.clone() }),
        }
    }
}

impl Default for MethodConfigs {
    fn default() -> Self {
        Self::desk()
    }
}

/// Evidence against monotonicity used for calibration: minus the log Bayes
/// factor, from the conditional-probability estimate for the regression
/// spline and from the per-increment product for the Bonferroni model, whose
/// joint monotone probability is numerically zero on noisy data.
pub fn evidence_statistic(result: &MonotonicityResult) -> f64 {
    match result.diagnostics {
        Diagnostics::Gibbs { log_bayes_factor_rb, .. } => -log_bayes_factor_rb,
        Diagnostics::Increments {
            log_bayes_factor_marginal, ..
        } => -log_bayes_factor_marginal,
        Diagnostics::ParticleFilter { .. } => -result.log_bayes_factor,
    }
}
