use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use monotest::config::RunConfig;
use monotest::harness::benchmark::{benchmark, external_rows, read_pvalues, BenchmarkReport, BenchmarkRow};
use monotest::harness::calibrate::{calibrate, CalibrationResult};
use monotest::harness::functions::{generate_dataset, TestFunctionId};
use monotest::result::{Method, MonotonicityResult};
use monotest::{Dataset, Error, Result};

/// Bayesian tests for monotonicity of a regression function.
#[derive(Parser)]
#[command(name = "monotest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with method, calibration and benchmark settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full particle counts and chain lengths instead of the desk-scale defaults.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads; 1 runs sequentially. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on a dataset and print the result as JSON.
    Test {
        #[arg(long)]
        method: Method,
        /// CSV with header `x,y`.
        #[arg(long)]
        input: PathBuf,
        /// Sampler seed; defaults to the method's configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a benchmark function on the equally spaced design.
    Simulate {
        #[arg(long)]
        function: TestFunctionId,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Critical values from simulated flat-function data.
    Calibrate {
        /// Tests to calibrate; repeat the flag for several. Defaults to all four.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Overrides the calibration seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Correct-classification counts on the eleven benchmark functions.
    Benchmark {
        /// Tests to run; defaults to the config's benchmark list.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// JSON written by `calibrate`; calibrates in-process when absent.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Overrides the benchmark seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Full JSON report including every run.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Table as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        /// `NAME=CALIBRATION.csv,RESULTS.csv`: p-values of an external test, in
        /// `function,replication,p_value` form, to add to the table.
        #[arg(long = "external", value_parser = parse_external)]
        externals: Vec<External>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone)]
struct External {
    name: String,
    calibration: PathBuf,
    results: PathBuf,
}

fn parse_external(s: &str) -> std::result::Result<External, String> {
    let (name, paths) = s.split_once('=').ok_or("expected NAME=CALIBRATION.csv,RESULTS.csv")?;
    let (cal, res) = paths.split_once(',').ok_or("expected two comma-separated paths")?;
    Ok(External {
        name: name.to_string(),
        calibration: cal.into(),
        results: res.into(),
    })
}

#[derive(Serialize)]
struct TestOutput<'a> {
    config_hash: &'a str,
    seed: u64,
    input: &'a Path,
    #[serde(flatten)]
    result: &'a MonotonicityResult,
}

#[derive(Serialize, serde::Deserialize)]
struct CalibrationOutput {
    config_hash: String,
    seed: u64,
    calibrations: Vec<CalibrationResult>,
}

#[derive(Serialize)]
struct BenchmarkOutput<'a> {
    #[serde(flatten)]
    report: &'a BenchmarkReport,
    external: &'a [BenchmarkRow],
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(if common.paper_scale { config.full_scale() } else { config })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Test {
            method,
            input,
            seed,
            output,
            common,
        } => {
            let config = load(&common)?;
            let methods = config.methods();
            let seed = seed.unwrap_or(match method {
                Method::Smoothing => methods.smoothing.seed,
                Method::Gauss => methods.gauss.seed,
                Method::Mom => methods.mom.seed,
                Method::Bonferroni => methods.bonferroni.seed,
            });
            let data = Dataset::read_csv_path(&input)?;
            let result = methods.run(method, &data, seed)?;
            let hash = config.hash();
            write_json(
                output.as_deref(),
                &TestOutput {
                    config_hash: &hash,
                    seed,
                    input: &input,
                    result: &result,
                },
            )
        }
        Command::Simulate {
            function,
            n,
            sigma,
            seed,
            output,
            common,
        } => {
            let config = load(&common)?;
            let data = generate_dataset(function, n, sigma, seed)?;
            let mut buf = format!(
                "# monotest simulate function={function} n={n} sigma={sigma:?} seed={seed} config_hash={}\n",
                config.hash()
            )
            .into_bytes();
            data.write_csv(&mut buf)?;
            write_bytes(output.as_deref(), &buf)
        }
        Command::Calibrate {
            methods,
            seed,
            output,
            common,
        } => {
            let mut config = load(&common)?;
            if let Some(seed) = seed {
                config.calibration.seed = seed;
            }
            let hash = config.hash();
            let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods };
            let calibrations = methods
                .into_iter()
                .map(|m| calibrate(m, &config.methods(), &config.calibration, &hash).map(|(c, _)| c))
                .collect::<Result<Vec<_>>>()?;
            write_json(
                output.as_deref(),
                &CalibrationOutput {
                    config_hash: hash,
                    seed: config.calibration.seed,
                    calibrations,
                },
            )
        }
        Command::Benchmark {
            methods,
            calibration,
            seed,
            output,
            table,
            externals,
            common,
        } => {
            let mut config = load(&common)?;
            if let Some(seed) = seed {
                config.benchmark.seed = seed;
            }
            if !methods.is_empty() {
                config.benchmark.methods = methods;
            }
            let hash = config.hash();
            let calibrations = match calibration {
                Some(path) => {
                    let file: CalibrationOutput = serde_json::from_reader(File::open(&path)?)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    file.calibrations
                }
                None => config
                    .benchmark
                    .methods
                    .iter()
                    .map(|&m| calibrate(m, &config.methods(), &config.calibration, &hash).map(|(c, _)| c))
                    .collect::<Result<Vec<_>>>()?,
            };
            let report = benchmark(&config.benchmark, &config.methods(), &calibrations, &hash)?;
            let mut external = Vec::new();
            for e in &externals {
                let cal = read_pvalues(File::open(&e.calibration)?)?;
                let res = read_pvalues(File::open(&e.results)?)?;
                external.extend(external_rows(&e.name, &cal, &res, config.calibration.alpha, &hash)?);
            }
            if let Some(path) = table {
                let mut all = report.clone();
                all.rows.extend(external.iter().cloned());
                let mut buf = Vec::new();
                all.write_csv(&mut buf)?;
                write_bytes(Some(&path), &buf)?;
            }
            write_json(
                output.as_deref(),
                &BenchmarkOutput {
                    report: &report,
                    external: &external,
                },
            )
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
