//! End-to-end acceptance checks. Each check writes one `criterion N: PASS|FAIL`
//! line straight to stderr, so the lines survive output capture.
//!
//! The calibration and benchmark checks take over an hour on one core.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use monotest::bonferroni::sample_prior_increments;
use monotest::frac_normal::{self, FracNormalParams};
use monotest::harness::benchmark::{benchmark, BenchmarkSettings};
use monotest::harness::calibrate::{calibrate, CalibrationSettings};
use monotest::harness::functions::{generate_dataset, grid, TestFunctionId};
use monotest::harness::seeds::{data_seed, sampler_seed, stream};
use monotest::harness::{evidence_statistic, MethodConfigs};
use monotest::quadrature::integrate_with_breaks;
use monotest::regression_spline::basis::{constraint_matrix, monotone_oracle};
use monotest::regression_spline::{run_chain, KnotBasis, PriorKind, SplinePriorConfig};
use monotest::result::Method;
use monotest::Dataset;

fn report(criterion: u8, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion}: {verdict} {detail}\n");
    std::io::stderr().lock().write_all(line.as_bytes()).unwrap();
}

// ---------------------------------------------------------------------------
// 1. Fractional-normal density and sampler.

const MASS_TOL: f64 = 1e-6;
const KS_TOL: f64 = 0.01;
const FN_DRAWS: usize = 100_000;

/// Kolmogorov distance between the draws and the quadrature CDF, accumulating
/// the CDF panel by panel between consecutive order statistics.
fn ks_distance(params: &FracNormalParams, draws: &mut [f64]) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let f = |g: f64| frac_normal::density(g, params);
    let (mut cdf, mut prev, mut sup) = (0.0, 0.0, 0.0f64);
    for (i, &x) in draws.iter().enumerate() {
        cdf += integrate_with_breaks(&f, &[prev, x], 1e-15, 1e-12).value;
        prev = x;
        sup = sup.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    sup
}

#[test]
fn criterion_1_fractional_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_mass, mut worst_ks) = (0.0f64, 0.0f64);
    let mut points = 0;
    for g0 in [0.1, 1.0, 10.0] {
        for xi in [0.5, 1.0, 5.0] {
            for tau in [0.1, 1.0, 5.0] {
                for u in [0.1, 0.5, 0.9] {
                    let params = FracNormalParams::new(g0, xi, tau, 0.0, u * xi).unwrap();
                    let mass = frac_normal::total_mass_quadrature(&params).value;
                    worst_mass = worst_mass.max((mass - 1.0).abs());
                    let mut draws: Vec<f64> = (0..FN_DRAWS).map(|_| frac_normal::sample(&params, &mut rng)).collect();
                    worst_ks = worst_ks.max(ks_distance(&params, &mut draws));
                    points += 1;
                }
            }
        }
    }
    assert_eq!(points, 81);
    let pass = worst_mass < MASS_TOL && worst_ks < KS_TOL;
    report(
        1,
        pass,
        &format!("max |mass - 1| = {worst_mass:.2e} (< {MASS_TOL:e}), max KS = {worst_ks:.4} (< {KS_TOL}) over {points} parameter points"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. Orthant of γ against the direct derivative check.

#[test]
fn criterion_2_constraint_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut disagreements, mut checks, mut monotone) = (0usize, 0usize, 0usize);
    for m in [1usize, 2, 5] {
        let basis = KnotBasis::equally_spaced(m);
        for pattern in 0..1u32 << m {
            let mut iota = vec![true, true];
            iota.extend((0..m).map(|k| pattern >> k & 1 == 1));
            let cols: Vec<usize> = (0..m + 2).filter(|&j| iota[j]).collect();
            let (l, _) = constraint_matrix(&iota, &basis).unwrap();
            for draw in 0..1000 {
                // Half the draws centre the derivative on a positive slope so
                // that both answers occur often.
                let shift = if draw % 2 == 0 { 0.0 } else { 1.5 };
                let mut beta = vec![0.0; m + 2];
                for &j in &cols {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    beta[j] = z * if j < 2 { 1.0 } else { 0.3 };
                }
                beta[0] += shift;
                let included: Vec<f64> = cols.iter().map(|&j| beta[j]).collect();
                let gamma: Vec<f64> = l
                    .iter()
                    .map(|row| row.iter().zip(&included).map(|(a, b)| a * b).sum())
                    .collect();
                let by_gamma = gamma.iter().all(|g| *g >= 0.0);
                let by_oracle = monotone_oracle(0.0, &beta, &basis);
                disagreements += usize::from(by_gamma != by_oracle);
                monotone += usize::from(by_oracle);
                checks += 1;
            }
        }
    }
    let pass = disagreements == 0 && monotone > 0 && monotone < checks;
    report(
        2,
        pass,
        &format!("{disagreements} disagreements in {checks} draws ({monotone} monotone)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. Two-coefficient Gibbs sampler against exhaustive quadrature.

const TOY_TV_TOL: f64 = 0.01;
const TOY_SWEEPS: usize = 1_000_000;
const TOY_SIGMA2: f64 = 0.09;

struct Toy {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Toy {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let y = x
            .iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.2 * t - 0.3 * t * t + TOY_SIGMA2.sqrt() * z
            })
            .collect();
        Self { x, y }
    }

    /// Mean function with derivative `γ₀` at 0 and `γ₁` at 1 (a zero marks an
    /// excluded coefficient): linear interpolation of the derivative, integrated.
    fn fitted(&self, g0: f64, g1: f64, t: f64) -> f64 {
        g0 * (t - t * t / 2.0) + g1 * t * t / 2.0
    }

    fn log_lik(&self, g0: f64, g1: f64) -> f64 {
        let rss: f64 = self.x.iter().zip(&self.y).map(|(&t, &y)| (y - self.fitted(g0, g1, t)).powi(2)).sum();
        -rss / (2.0 * TOY_SIGMA2)
    }
}

fn toy_prior_density(gamma: &[f64], prior: &SplinePriorConfig) -> f64 {
    let p = gamma.len() as i32;
    let v = prior.prior_variance(TOY_SIGMA2);
    let orthant = if gamma.iter().all(|g| *g >= 0.0) {
        prior.q1
    } else {
        (1.0 - prior.q1) / (2f64.powi(p) - 1.0)
    };
    let ss: f64 = gamma.iter().map(|g| g * g).sum();
    let normal = (-ss / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).powf(p as f64 / 2.0);
    let shape = match prior.prior_kind {
        PriorKind::Gaussian => 1.0,
        PriorKind::Mom => ss / (p as f64 * v),
    };
    orthant * 2f64.powi(p) * normal * shape
}

/// Cell index: inclusion pattern, then the sign of each included value.
fn cell(iota: &[bool], gamma: &[f64]) -> usize {
    let sign = |j: usize| usize::from(gamma[j] < 0.0);
    match (iota[0], iota[1]) {
        (false, false) => 0,
        (true, false) => 1 + sign(0),
        (false, true) => 3 + sign(1),
        (true, true) => 5 + 2 * sign(0) + sign(1),
    }
}

fn toy_oracle(toy: &Toy, prior: &SplinePriorConfig) -> [f64; 9] {
    const B: f64 = 15.0;
    let (tol_abs, tol_rel) = (1e-14, 1e-10);
    // Likelihood is scaled by exp(-offset) to keep magnitudes near one.
    let offset = toy.log_lik(0.0, 0.0);
    let lik = |g0: f64, g1: f64| (toy.log_lik(g0, g1) - offset).exp();
    let pi = 1.0 - prior.p_exclude;
    let pe = prior.p_exclude;
    let halves = [[0.0, B], [-B, 0.0]];
    let breaks = |h: [f64; 2]| {
        let mut b: Vec<f64> = (0..=60).map(|i| h[0] + (h[1] - h[0]) * i as f64 / 60.0).collect();
        b.dedup();
        b
    };
    let mut mass = [0.0; 9];
    mass[0] = pe * pe;
    for (s, h) in halves.iter().enumerate() {
        let one = |g: f64| lik(g, g) * toy_prior_density(&[g], prior);
        mass[1 + s] = pi * pe * integrate_with_breaks(&one, &breaks(*h), tol_abs, tol_rel).value;
        let two = |g: f64| lik(0.0, g) * toy_prior_density(&[g], prior);
        mass[3 + s] = pe * pi * integrate_with_breaks(&two, &breaks(*h), tol_abs, tol_rel).value;
    }
    for (s0, h0) in halves.iter().enumerate() {
        for (s1, h1) in halves.iter().enumerate() {
            let outer = |g0: f64| {
                let inner = |g1: f64| lik(g0, g1) * toy_prior_density(&[g0, g1], prior);
                integrate_with_breaks(&inner, &breaks(*h1), tol_abs, tol_rel).value
            };
            mass[5 + 2 * s0 + s1] = pi * pi * integrate_with_breaks(&outer, &breaks(*h0), tol_abs, tol_rel).value;
        }
    }
    let total: f64 = mass.iter().sum();
    mass.map(|m| m / total)
}

fn toy_chain(toy: &Toy, prior: &SplinePriorConfig) -> [f64; 9] {
    let mut counts = [0usize; 9];
    run_chain(&toy.x, &toy.y, &KnotBasis::equally_spaced(0), prior, |s| {
        counts[cell(&s.iota, &s.gamma)] += 1;
    })
    .unwrap();
    counts.map(|c| c as f64 / TOY_SWEEPS as f64)
}

#[test]
fn criterion_3_toy_gibbs_matches_quadrature() {
    let toy = Toy::new();
    let mut lines = Vec::new();
    let mut pass = true;
    for base in [SplinePriorConfig::gaussian(), SplinePriorConfig::mom()] {
        // A prior variance of order σ² keeps several cells in play; with the
        // default c almost all mass sits on the empty model.
        let prior = SplinePriorConfig {
            c: base.c * TOY_SIGMA2,
            p_exclude: 0.5,
            fixed_sigma2: Some(TOY_SIGMA2),
            fixed_alpha: Some(0.0),
            burn_in: 1000,
            sweeps: TOY_SWEEPS,
            seed: 13,
            ..base
        };
        let exact = toy_oracle(&toy, &prior);
        let sampled = toy_chain(&toy, &prior);
        let tv = 0.5 * exact.iter().zip(&sampled).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let largest = exact.iter().cloned().fold(0.0, f64::max);
        pass &= tv < TOY_TV_TOL && largest < 0.9;
        lines.push(format!("{:?} TV = {tv:.4} (largest cell {largest:.3})", prior.prior_kind));
    }
    report(3, pass, &format!("{} (< {TOY_TV_TOL}, {TOY_SWEEPS} sweeps)", lines.join(", ")));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4 and 5. Calibration on flat data and the desk-scale table.

const RATE_TOL: f64 = 0.01;
const TABLE_TOL: f64 = 15.0;
const TABLE_MIN_CLOSE: usize = 9;
const TABLE_FLOOR: f64 = 90.0;

/// Correct classifications out of 100, functions 1 to 11.
fn reference_row(method: Method) -> Option<[f64; 11]> {
    match method {
        Method::Smoothing => Some([99.0, 72.0, 34.0, 80.0, 95.0, 96.0, 92.0, 80.0, 98.0, 99.0, 100.0]),
        Method::Gauss => Some([100.0, 74.0, 35.0, 91.0, 85.0, 99.0, 91.0, 93.0, 95.0, 97.0, 99.0]),
        Method::Mom => Some([99.0, 63.0, 49.0, 98.0, 90.0, 100.0, 47.0, 93.0, 95.0, 99.0, 99.0]),
        Method::Bonferroni => None,
    }
}

#[test]
fn criteria_4_and_5_calibration_and_table() {
    let configs = MethodConfigs::desk();
    let cal_settings = CalibrationSettings::default();
    let hash = "acceptance";
    let mut calibrations = Vec::new();
    let mut rate_lines = Vec::new();
    let mut rates_ok = true;
    for m in Method::ALL {
        let (cal, _) = calibrate(m, &configs, &cal_settings, hash).unwrap();
        rates_ok &= (cal.achieved_rate - cal_settings.alpha).abs() <= RATE_TOL + 1e-12;
        rate_lines.push(format!("{m} {:.1}%", 100.0 * cal.achieved_rate));
        calibrations.push(cal);
    }
    report(
        4,
        rates_ok,
        &format!("rejection on flat data at n_cal = {}: {} (target 5 ± 1)", cal_settings.n_cal, rate_lines.join(", ")),
    );

    let settings = BenchmarkSettings {
        methods: Method::ALL.to_vec(),
        ..BenchmarkSettings::default()
    };
    assert_eq!(settings.replications, 50);
    let table = benchmark(&settings, &configs, &calibrations, hash).unwrap();
    let mut table_ok = true;
    let mut lines = Vec::new();
    for m in Method::ALL {
        let row: Vec<f64> = TestFunctionId::all()
            .map(|f| {
                let r = table.row(m.name(), f.get()).unwrap();
                100.0 * r.n_correct as f64 / r.n_total as f64
            })
            .collect();
        let cells = row.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join(" ");
        match reference_row(m) {
            Some(reference) => {
                let close = row.iter().zip(&reference).filter(|(a, b)| (*a - *b).abs() <= TABLE_TOL).count();
                let floor = [0, 9, 10].iter().all(|&i| row[i] >= TABLE_FLOOR);
                table_ok &= close >= TABLE_MIN_CLOSE && floor;
                lines.push(format!("{m} [{cells}] within {TABLE_TOL}pp on {close}/11, f1/f10/f11 >= {TABLE_FLOOR}: {floor}"));
            }
            None => lines.push(format!("{m} [{cells}] (no reference row)")),
        }
    }
    report(5, table_ok, &format!("R = {}: {}", settings.replications, lines.join("; ")));
    assert!(rates_ok && table_ok);
}

// ---------------------------------------------------------------------------
// 6. Bonferroni prior.

#[test]
fn criterion_6_bonferroni_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let paths = 100_000;
    let hits = (0..paths)
        .filter(|_| sample_prior_increments(99, &mut rng).iter().all(|d| *d > 0.0))
        .count();
    let freq = hits as f64 / paths as f64;
    let pass = (freq - 0.5).abs() <= 0.01;
    report(6, pass, &format!("monotone prior paths {:.2}% of {paths} (target 50 ± 1)", 100.0 * freq));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Bayes factors grow with n for a monotone truth and shrink for a
//    non-monotone one.

const CONSISTENCY_SEED: u64 = 20_150_602;
const CONSISTENCY_SEEDS: u64 = 20;
const CONSISTENCY_N: [usize; 3] = [50, 100, 200];

fn consistency_data(truth: u64, n: usize, rep: u64) -> (Dataset, u64) {
    let seed = data_seed(CONSISTENCY_SEED, stream::CONSISTENCY_DATA, truth * 1000 + n as u64, rep);
    let data = if truth == 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = grid(n);
        let y = x
            .iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                t + 0.1 * z
            })
            .collect();
        Dataset::new(x, y).unwrap()
    } else {
        generate_dataset(TestFunctionId::new(truth as u8).unwrap(), n, 0.1, seed).unwrap()
    };
    (data, seed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn criterion_7_bayes_factor_trend() {
    let configs = MethodConfigs::desk();
    let mut pass = true;
    let mut lines = Vec::new();
    for m in Method::ALL {
        for (truth, label) in [(0u64, "f(x)=x"), (3, "f3")] {
            let medians: Vec<f64> = CONSISTENCY_N
                .iter()
                .map(|&n| {
                    let bf: Vec<f64> = (0..CONSISTENCY_SEEDS)
                        .map(|rep| {
                            let (data, ds) = consistency_data(truth, n, rep);
                            let r = configs.run(m, &data, sampler_seed(CONSISTENCY_SEED, m.tag(), ds)).unwrap();
                            -evidence_statistic(&r)
                        })
                        .collect();
                    median(bf)
                })
                .collect();
            let increasing = medians.windows(2).all(|w| w[1] > w[0]);
            let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
            let ok = if truth == 0 { increasing } else { decreasing };
            // The consistency result covers the spline models; the Bonferroni
            // line is informational.
            if m != Method::Bonferroni {
                pass &= ok;
            }
            let shown = medians.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ");
            let want = if truth == 0 { "increasing" } else { "decreasing" };
            let tag = if m == Method::Bonferroni { " (informational)" } else { "" };
            lines.push(format!("{m} {label} [{shown}] {want}: {ok}{tag}"));
        }
    }
    report(7, pass, &format!("median log BF at n = 50, 100, 200: {}", lines.join("; ")));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Byte-for-byte reruns of the command-line tool.

#[test]
fn criterion_8_cli_determinism() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    std::fs::write(
        path("small.toml"),
        "[smoothing]\nn_particles = 2000\n[gauss]\nburn_in = 200\nsweeps = 1000\n[mom]\nburn_in = 200\nsweeps = 1000\n\
         [bonferroni]\nburn_in = 200\nsweeps = 1000\n[calibration]\nn_cal = 20\nn = 40\n\
         [benchmark]\nreplications = 2\nn = 40\nfunctions = [1, 3, 9]\nmethods = [\"smoothing\", \"gauss\", \"mom\", \"bonferroni\"]\n",
    )
    .unwrap();
    let cfg = path("small.toml");
    let cfg = cfg.to_str().unwrap();
    let data = path("data.csv");
    let data = data.to_str().unwrap();
    let mut invocations: Vec<Vec<String>> = vec![
        vec!["simulate", "--function", "7", "--n", "60", "--seed", "5", "--output", data],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for m in Method::ALL {
        invocations.push(
            ["test", "--method", m.name(), "--input", data, "--seed", "9", "--config", cfg]
                .map(String::from)
                .to_vec(),
        );
    }
    invocations.push(["calibrate", "--config", cfg, "--threads", "1"].map(String::from).to_vec());
    invocations.push(["benchmark", "--config", cfg, "--threads", "1"].map(String::from).to_vec());

    let run = |args: &[String]| {
        let out = Command::new(env!("CARGO_BIN_EXE_monotest")).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let mut bytes = out.stdout;
        if args[0] == "simulate" {
            bytes.extend(std::fs::read(data).unwrap());
        }
        bytes
    };
    let (mut identical, mut hashed) = (0, 0);
    for args in &invocations {
        let first = run(args);
        let second = run(args);
        identical += usize::from(first == second);
        let text = String::from_utf8_lossy(&first);
        hashed += usize::from(text.contains("config_hash") && text.contains("seed"));
    }
    let pass = identical == invocations.len() && hashed == invocations.len();
    report(
        8,
        pass,
        &format!(
            "{identical}/{} invocations identical on rerun, {hashed} embed config hash and seed",
            invocations.len()
        ),
    );
    assert!(pass);
}
