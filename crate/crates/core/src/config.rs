//! Run configuration read from TOML, and its hash.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bonferroni::BonferroniConfig;
use crate::error::{Error, Result};
use crate::harness::benchmark::BenchmarkSettings;
use crate::harness::calibrate::CalibrationSettings;
use crate::harness::MethodConfigs;
use crate::regression_spline::SplinePriorConfig;
use crate::smoothing_spline::SmoothingConfig;

/// Everything that determines the output of a run apart from the command-line seed.
/// Missing sections and keys take desk-scale defaults; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub smoothing: SmoothingConfig,
    pub gauss: SplinePriorConfig,
    pub mom: SplinePriorConfig,
    pub bonferroni: BonferroniConfig,
    pub calibration: CalibrationSettings,
    pub benchmark: BenchmarkSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_methods(MethodConfigs::desk())
    }
}

impl RunConfig {
    fn from_methods(m: MethodConfigs) -> Self {
        Self {
            smoothing: m.smoothing,
            gauss: m.gauss,
            mom: m.mom,
            bonferroni: m.bonferroni,
            calibration: CalibrationSettings::default(),
            benchmark: BenchmarkSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: Sections = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = Self::default();
        let config = Self {
            smoothing: overlay(base.smoothing, raw.smoothing, "smoothing")?,
            gauss: overlay(base.gauss, raw.gauss, "gauss")?,
            mom: overlay(base.mom, raw.mom, "mom")?,
            bonferroni: overlay(base.bonferroni, raw.bonferroni, "bonferroni")?,
            calibration: overlay(base.calibration, raw.calibration, "calibration")?,
            benchmark: overlay(base.benchmark, raw.benchmark, "benchmark")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.methods().validate()?;
        self.calibration.validate()?;
        self.benchmark.validate()
    }

    pub fn methods(&self) -> MethodConfigs {
        MethodConfigs {
            smoothing: self.smoothing.clone(),
            gauss: self.gauss.clone(),
            mom: self.mom.clone(),
            bonferroni: self.bonferroni.clone(),
        }
    }

    /// Full particle counts and chain lengths; other settings are kept.
    pub fn full_scale(mut self) -> Self {
        let full = MethodConfigs::full();
        self.smoothing.n_particles = full.smoothing.n_particles;
        for (mine, theirs) in [(&mut self.gauss, &full.gauss), (&mut self.mom, &full.mom)] {
            mine.burn_in = theirs.burn_in;
            mine.sweeps = theirs.sweeps;
        }
        self.bonferroni.burn_in = full.bonferroni.burn_in;
        self.bonferroni.sweeps = full.bonferroni.sweeps;
        self
    }

    /// SHA-256 of the compact JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

// Each section is kept raw so that its keys land on top of that section's own
// defaults rather than the field type's.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sections {
    smoothing: Option<toml::Table>,
    gauss: Option<toml::Table>,
    mom: Option<toml::Table>,
    bonferroni: Option<toml::Table>,
    calibration: Option<toml::Table>,
    benchmark: Option<toml::Table>,
}

fn overlay<T: Serialize + DeserializeOwned>(base: T, section: Option<toml::Table>, name: &str) -> Result<T> {
    let Some(section) = section else {
        return Ok(base);
    };
    let bad = |e: toml::ser::Error| Error::Config(format!("[{name}]: {e}"));
    let mut table = toml::Table::try_from(base).map_err(bad)?;
    table.extend(section);
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[{name}]: {e}")))
}
