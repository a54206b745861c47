//! Correct-classification counts per benchmark function and test.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::{critical_value, CalibrationResult};
use super::functions::{generate_dataset, TestFunctionId};
use super::seeds::{data_seed, sampler_seed, stream};
use super::{evidence_statistic, MethodConfigs};
use crate::data::{csv_error, CsvInput};
use crate::error::{Error, Result};
use crate::result::{float_text, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSettings {
    pub replications: usize,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub functions: Vec<TestFunctionId>,
    pub methods: Vec<Method>,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            replications: 50,
            n: 100,
            sigma: 0.1,
            seed: 20_150_601,
            functions: TestFunctionId::all().collect(),
            methods: vec![Method::Smoothing, Method::Gauss, Method::Mom],
        }
    }
}

impl BenchmarkSettings {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.n < 3 || !(self.sigma >= 0.0) {
            return Err(Error::Config("benchmark needs replications ≥ 1, n ≥ 3 and σ ≥ 0".into()));
        }
        if self.functions.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("benchmark needs at least one function and one method".into()));
        }
        Ok(())
    }
}

/// One cell of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub test: String,
    pub function: u8,
    pub n_correct: usize,
    pub n_total: usize,
    #[serde(with = "float_text")]
    pub critical_value: f64,
    pub config_hash: String,
    pub monotone: bool,
    /// Runs that returned an error; they count as misclassified.
    pub failures: usize,
}

/// Evidence statistic of one test on one replication; `None` when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub test: String,
    pub function: u8,
    pub replication: u64,
    pub data_seed: u64,
    #[serde(with = "float_text::option")]
    pub statistic: Option<f64>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub seed: u64,
    pub replications: usize,
    pub rows: Vec<BenchmarkRow>,
    pub runs: Vec<Run>,
}

impl BenchmarkReport {
    pub fn row(&self, test: &str, function: u8) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.test == test && r.function == function)
    }

    /// The table as CSV, one line per row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["test", "function", "n_correct", "n_total", "critical_value", "config_hash", "monotone", "failures"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.test.clone(),
                r.function.to_string(),
                r.n_correct.to_string(),
                r.n_total.to_string(),
                float_text::to_text(r.critical_value),
                r.config_hash.clone(),
                r.monotone.to_string(),
                r.failures.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every enabled test on every replication and classifies against the
/// calibrated critical values.
pub fn benchmark(
    settings: &BenchmarkSettings,
    configs: &MethodConfigs,
    calibrations: &[CalibrationResult],
    config_hash: &str,
) -> Result<BenchmarkReport> {
    settings.validate()?;
    let criticals: Vec<(Method, f64)> = settings
        .methods
        .iter()
        .map(|&m| {
            calibrations
                .iter()
                .find(|c| c.test_name == m)
                .map(|c| (m, c.critical_value))
                .ok_or_else(|| Error::MissingCalibration(m.name().to_string()))
        })
        .collect::<Result<_>>()?;
    let tasks: Vec<(TestFunctionId, u64)> = settings
        .functions
        .iter()
        .flat_map(|&f| (0..settings.replications as u64).map(move |r| (f, r)))
        .collect();
    let per_task: Vec<Vec<Run>> = tasks
        .par_iter()
        .map(|&(f, rep)| {
            let ds = data_seed(settings.seed, stream::BENCHMARK_DATA, u64::from(f.get()), rep);
            let data = generate_dataset(f, settings.n, settings.sigma, ds);
            criticals
                .iter()
                .map(|&(m, critical)| {
                    let statistic = data
                        .as_ref()
                        .ok()
                        .and_then(|d| configs.run(m, d, sampler_seed(settings.seed, m.tag(), ds)).ok())
                        .map(|r| evidence_statistic(&r))
                        .filter(|s| !s.is_nan());
                    Run {
                        test: m.name().to_string(),
                        function: f.get(),
                        replication: rep,
                        data_seed: ds,
                        statistic,
                        rejected: statistic.is_some_and(|s| s > critical),
                    }
                })
                .collect()
        })
        .collect();
    let runs: Vec<Run> = per_task.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for &(m, critical) in &criticals {
        for &f in &settings.functions {
            rows.push(tally(m.name(), f, critical, config_hash, runs.iter().filter(|r| r.test == m.name())));
        }
    }
    Ok(BenchmarkReport {
        config_hash: config_hash.to_string(),
        seed: settings.seed,
        replications: settings.replications,
        rows,
        runs,
    })
}

fn tally<'a>(
    test: &str,
    f: TestFunctionId,
    critical: f64,
    config_hash: &str,
    runs: impl Iterator<Item = &'a Run>,
) -> BenchmarkRow {
    let monotone = f.is_monotone();
    let (mut n_total, mut n_correct, mut failures) = (0, 0, 0);
    for r in runs.filter(|r| r.function == f.get()) {
        n_total += 1;
        match r.statistic {
            None => failures += 1,
            Some(_) => n_correct += usize::from(r.rejected != monotone),
        }
    }
    BenchmarkRow {
        test: test.to_string(),
        function: f.get(),
        n_correct,
        n_total,
        critical_value: critical,
        config_hash: config_hash.to_string(),
        monotone,
        failures,
    }
}

/// A p-value computed outside this crate for one benchmark replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalPValue {
    pub function: u8,
    pub replication: u64,
    pub p_value: f64,
}

/// Reads `function,replication,p_value` CSV.
pub fn read_pvalues<R: Read>(reader: R) -> Result<Vec<ExternalPValue>> {
    let input = CsvInput::read(reader)?;
    let mut rdr = input.reader();
    let bad = csv_error;
    let head = input.header_line();
    let headers = rdr.headers().map_err(|e| bad(head, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["function", "replication", "p_value"] {
        return Err(bad(head, 1, "expected header `function,replication,p_value`".into()));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let (row, record) = input.located(record)?;
        if record.len() != 3 {
            return Err(bad(row, 1, format!("expected 3 fields, found {}", record.len())));
        }
        let function: u8 = record[0].parse().map_err(|_| bad(row, 1, format!("`{}` is not a function id", &record[0])))?;
        TestFunctionId::new(function).map_err(|e| bad(row, 1, e.to_string()))?;
        let replication = record[1].parse().map_err(|_| bad(row, 2, format!("`{}` is not a replication index", &record[1])))?;
        let p_value: f64 = record[2].parse().map_err(|_| bad(row, 3, format!("`{}` is not a number", &record[2])))?;
        if !(0.0..=1.0).contains(&p_value) {
            return Err(bad(row, 3, format!("p-value {p_value} is outside [0, 1]")));
        }
        out.push(ExternalPValue {
            function,
            replication,
            p_value,
        });
    }
    Ok(out)
}

/// Rows for an external test: `calibration` holds its p-values on flat data,
/// and monotonicity is rejected when `p < p*` with `p*` the empirical `alpha` quantile.
pub fn external_rows(
    name: &str,
    calibration: &[ExternalPValue],
    results: &[ExternalPValue],
    alpha: f64,
    config_hash: &str,
) -> Result<Vec<BenchmarkRow>> {
    if calibration.is_empty() {
        return Err(Error::MissingCalibration(name.to_string()));
    }
    let stats: Vec<f64> = calibration.iter().map(|p| -p.p_value).collect();
    let critical = critical_value(&stats, alpha);
    let mut functions: Vec<u8> = results.iter().map(|r| r.function).collect();
    functions.sort_unstable();
    functions.dedup();
    let runs: Vec<Run> = results
        .iter()
        .map(|r| Run {
            test: name.to_string(),
            function: r.function,
            replication: r.replication,
            data_seed: 0,
            statistic: Some(-r.p_value),
            rejected: -r.p_value > critical,
        })
        .collect();
    Ok(functions
        .into_iter()
        .map(|f| {
            let id = TestFunctionId::new(f).expect("validated on read");
            let mut row = tally(name, id, critical, config_hash, runs.iter());
            row.critical_value = -critical;
            row
        })
        .collect())
}
