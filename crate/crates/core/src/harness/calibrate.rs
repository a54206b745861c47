//! Critical values from simulated flat-function data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functions::{generate_dataset, TestFunctionId};
use super::seeds::{data_seed, sampler_seed, stream};
use super::{evidence_statistic, MethodConfigs};
use crate::error::{Error, Result};
use crate::result::{float_text, Method};

/// Where the calibration datasets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub n_cal: usize,
    /// Target rejection rate.
    pub alpha: f64,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_cal: 1000,
            alpha: 0.05,
            n: 100,
            sigma: 0.1,
            seed: 20_150_601,
        }
    }
}

impl CalibrationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_cal < 20 {
            return Err(Error::Config("calibration needs n_cal ≥ 20".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1)".into()));
        }
        if self.n < 3 || !(self.sigma >= 0.0) {
            return Err(Error::Config("calibration data need n ≥ 3 and σ ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub test_name: Method,
    /// Reject monotonicity when the evidence statistic exceeds this.
    #[serde(with = "float_text")]
    pub critical_value: f64,
    pub n_cal: usize,
    pub alpha: f64,
    /// Fraction of the calibration statistics above the critical value.
    pub achieved_rate: f64,
    pub failures: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Empirical `1 − alpha` quantile: the `⌈(1 − alpha) n⌉`-th smallest value.
/// Ties at the cutoff are not rejected, so at most `⌊alpha n⌋` values exceed it.
pub fn critical_value(statistics: &[f64], alpha: f64) -> f64 {
    assert!(!statistics.is_empty(), "no statistics to calibrate on");
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard the product against rounding just above an integer.
    let k = (((1.0 - alpha) * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

/// Fraction of `statistics` strictly above `critical`.
pub fn rejection_rate(statistics: &[f64], critical: f64) -> f64 {
    statistics.iter().filter(|s| **s > critical).count() as f64 / statistics.len() as f64
}

/// Evidence statistics of `method` on the calibration datasets, in
/// replication order; failed runs are `None`.
pub fn calibration_statistics(method: Method, configs: &MethodConfigs, settings: &CalibrationSettings) -> Vec<Option<f64>> {
    let flat = TestFunctionId::new(9).expect("f9 exists");
    (0..settings.n_cal as u64)
        .into_par_iter()
        .map(|rep| {
            let ds = data_seed(settings.seed, stream::CALIBRATION_DATA, 9, rep);
            let data = generate_dataset(flat, settings.n, settings.sigma, ds).ok()?;
            let result = configs.run(method, &data, sampler_seed(settings.seed, method.tag(), ds)).ok()?;
            Some(evidence_statistic(&result)).filter(|s| !s.is_nan())
        })
        .collect()
}

/// Calibrates `method`; more than 1% failed runs aborts.
pub fn calibrate(
    method: Method,
    configs: &MethodConfigs,
    settings: &CalibrationSettings,
    config_hash: &str,
) -> Result<(CalibrationResult, Vec<f64>)> {
    settings.validate()?;
    let raw = calibration_statistics(method, configs, settings);
    let stats: Vec<f64> = raw.iter().flatten().copied().collect();
    let failures = raw.len() - stats.len();
    if failures * 100 > settings.n_cal || stats.is_empty() {
        return Err(Error::CalibrationFailures {
            failures,
            total: settings.n_cal,
        });
    }
    let critical = critical_value(&stats, settings.alpha);
    let result = CalibrationResult {
        test_name: method,
        critical_value: critical,
        n_cal: settings.n_cal,
        alpha: settings.alpha,
        achieved_rate: rejection_rate(&stats, critical),
        failures,
        seed: settings.seed,
        config_hash: config_hash.to_string(),
    };
    Ok((result, stats))
}
