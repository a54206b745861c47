//! Increment-level baseline: every first difference of the regression
//! function gets an independent half-normal/normal mixture prior whose weight
//! makes the all-positive event a priori even.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel_smooth::plug_in_estimates;
use crate::numeric::{log_add_exp, log_norm_cdf, normal_above, normal_below, std_normal};
use crate::result::{log_bayes_factor, Diagnostics, Method, MonotonicityResult};

/// Mixture weight `w` with `((1 + w) / 2)^k = 1/2`.
pub fn solve_w(k: usize) -> f64 {
    assert!(k >= 1, "need at least one increment");
    2.0 * 2f64.powf(-1.0 / k as f64) - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BonferroniConfig {
    /// Inverse-gamma prior on `τ²`.
    pub tau2_shape: f64,
    pub tau2_scale: f64,
    /// Prior variance of the first function value.
    pub f1_prior_var: f64,
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Replace the plug-in noise variance.
    pub fixed_sigma2: Option<f64>,
    pub fixed_tau2: Option<f64>,
    /// Drop the likelihood so the chain targets the prior.
    pub prior_only: bool,
}

impl Default for BonferroniConfig {
    fn default() -> Self {
        Self {
            tau2_shape: 1.0,
            tau2_scale: 1.0,
            f1_prior_var: 1e10,
            burn_in: 20_000,
            sweeps: 100_000,
            seed: 0,
            fixed_sigma2: None,
            fixed_tau2: None,
            prior_only: false,
        }
    }
}

impl BonferroniConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("bonferroni: {what}")));
        if !(self.tau2_shape > 0.0 && self.tau2_scale > 0.0 && self.f1_prior_var > 0.0) {
            return bad("tau2_shape, tau2_scale and f1_prior_var must be positive");
        }
        if self.sweeps == 0 {
            return bad("need at least one retained sweep");
        }
        if self.fixed_sigma2.is_some_and(|s| !(s > 0.0)) || self.fixed_tau2.is_some_and(|t| !(t > 0.0)) {
            return bad("fixed variances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonferroniState {
    pub f: Vec<f64>,
    /// `delta[i] = f[i + 1] − f[i]`.
    pub delta: Vec<f64>,
    /// Whether each increment is currently attributed to the half-normal piece.
    pub truncated: Vec<bool>,
    pub w: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

impl BonferroniState {
    pub fn is_monotone(&self) -> bool {
        self.delta.iter().all(|d| *d > 0.0)
    }
}

/// Conditional of one increment given everything else, as returned by the sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementConditional {
    pub log_pos: f64,
    pub log_neg: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Draws `delta[i]` and its label with the label summed out first.
///
/// `resid` holds `y − f` and is kept in step with the new increment.
fn update_increment<R: Rng + ?Sized>(
    i: usize,
    state: &mut BonferroniState,
    resid: &mut [f64],
    prior_only: bool,
    rng: &mut R,
) -> IncrementConditional {
    let old = state.delta[i];
    let tail = &mut resid[i + 1..];
    let (mut sum, count) = (0.0, tail.len() as f64);
    for r in tail.iter_mut() {
        *r += old;
        sum += *r;
    }
    let (data_prec, data_sum) = if prior_only { (0.0, 0.0) } else { (count / state.sigma2, sum / state.sigma2) };
    let prec = data_prec + 1.0 / state.tau2;
    let mean = data_sum / prec;
    let sd = prec.recip().sqrt();
    // Half-normal piece has density 2φ on the positive side, so the positive
    // side carries (1 + w) Φ(μ/s) against (1 − w) Φ(−μ/s).
    let cond = IncrementConditional {
        log_pos: state.w.ln_1p() + log_norm_cdf(mean / sd),
        log_neg: (-state.w).ln_1p() + log_norm_cdf(-mean / sd),
        mean,
        sd,
    };
    let p_pos = 1.0 / (1.0 + (cond.log_neg - cond.log_pos).exp());
    let new = if rng.random::<f64>() < p_pos {
        state.truncated[i] = rng.random::<f64>() * (1.0 + state.w) < 2.0 * state.w;
        normal_above(rng, mean, sd, 0.0)
    } else {
        state.truncated[i] = false;
        normal_below(rng, mean, sd, 0.0)
    };
    for r in resid[i + 1..].iter_mut() {
        *r -= new;
    }
    state.delta[i] = new;
    cond
}

fn rebuild_f(state: &mut BonferroniState) {
    for i in 0..state.delta.len() {
        state.f[i + 1] = state.f[i] + state.delta[i];
    }
}

/// Runs the chain on raw observations with a known noise variance.
pub fn run_chain_with_sigma2<F: FnMut(&BonferroniState)>(
    y: &[f64],
    sigma2: f64,
    config: &BonferroniConfig,
    mut record: F,
) -> Result<MonotonicityResult> {
    config.validate()?;
    if y.len() < 2 {
        return Err(Error::InvalidData("need at least two observations".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    let n = y.len();
    let k = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = BonferroniState {
        f: vec![0.0; n],
        delta: vec![0.0; k],
        truncated: vec![false; k],
        w: solve_w(k),
        tau2: config.fixed_tau2.unwrap_or(1.0),
        sigma2,
    };
    if !config.prior_only {
        state.f[0] = y[0];
        for i in 0..k {
            state.delta[i] = y[i + 1] - y[i];
        }
        rebuild_f(&mut state);
    }
    let mut resid: Vec<f64> = y.iter().zip(&state.f).map(|(a, b)| a - b).collect();
    let (mut monotone, mut truncated_total) = (0usize, 0usize);
    let (mut rb_mono, mut rb_non) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut positive = vec![0.0; k];
    for sweep in 0..config.burn_in + config.sweeps {
        let keep = sweep >= config.burn_in;
        // First value: conjugate normal given the increments.
        let old = state.f[0];
        let new = if config.prior_only {
            config.f1_prior_var.sqrt() * std_normal(&mut rng)
        } else {
            let sum: f64 = resid.iter().map(|r| r + old).sum();
            let prec = n as f64 / sigma2 + 1.0 / config.f1_prior_var;
            sum / sigma2 / prec + prec.recip().sqrt() * std_normal(&mut rng)
        };
        for r in resid.iter_mut() {
            *r += old - new;
        }
        state.f[0] = new;

        let mut negatives = state.delta.iter().filter(|d| **d <= 0.0).count();
        for i in 0..k {
            negatives -= usize::from(state.delta[i] <= 0.0);
            let cond = update_increment(i, &mut state, &mut resid, config.prior_only, &mut rng);
            if keep {
                let total = log_add_exp(cond.log_pos, cond.log_neg);
                positive[i] += (cond.log_pos - total).exp();
                if negatives == 0 {
                    rb_mono = log_add_exp(rb_mono, cond.log_pos - total);
                    rb_non = log_add_exp(rb_non, cond.log_neg - total);
                } else {
                    rb_non = log_add_exp(rb_non, 0.0);
                }
            }
            negatives += usize::from(state.delta[i] <= 0.0);
        }
        rebuild_f(&mut state);

        if config.fixed_tau2.is_none() {
            let ss: f64 = state.delta.iter().map(|d| d * d).sum();
            let shape = config.tau2_shape + 0.5 * k as f64;
            let rate = config.tau2_scale + 0.5 * ss;
            let precision: f64 = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate").sample(&mut rng);
            state.tau2 = 1.0 / precision;
        }
        if keep {
            monotone += usize::from(state.is_monotone());
            truncated_total += state.truncated.iter().filter(|t| **t).count();
            record(&state);
        }
    }
    let rb_total = log_add_exp(rb_mono, rb_non);
    let non = config.sweeps - monotone;
    let log_product: f64 = positive.iter().map(|p| (p / config.sweeps as f64).ln()).sum();
    Ok(MonotonicityResult::from_log_masses(
        Method::Bonferroni,
        (monotone as f64).ln(),
        (non as f64).ln(),
        0.5,
        Diagnostics::Increments {
            sweeps: config.sweeps,
            burn_in: config.burn_in,
            p_monotone_rb: (rb_mono - rb_total).exp(),
            log_bayes_factor_rb: log_bayes_factor(rb_mono, rb_non, 0.5),
            log_bayes_factor_marginal: log_bayes_factor(log_product, (-log_product.exp()).ln_1p(), 0.5),
            mean_truncated: truncated_total as f64 / (config.sweeps * k) as f64,
            sigma2_hat: sigma2,
            w: state.w,
        },
    ))
}

/// Plug-in noise variance followed by the Gibbs sampler.
pub fn run_bonferroni(data: &Dataset, config: &BonferroniConfig) -> Result<MonotonicityResult> {
    let sigma2 = match config.fixed_sigma2 {
        Some(s) => s,
        None => plug_in_estimates(data)?.sigma2_hat,
    };
    run_chain_with_sigma2(data.y(), sigma2, config, |_| {})
}

/// Draws one increment path from the prior with `τ = 1`.
pub fn sample_prior_increments<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let w = solve_w(k);
    (0..k)
        .map(|_| {
            let z = std_normal(rng);
            if rng.random::<f64>() < w { z.abs() } else { z }
        })
        .collect()
}
