//! Orthant-mixture priors on the derivative values `γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{LN_2, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Truncated normal pieces.
    Gaussian,
    /// Method-of-moments pieces, vanishing at `γ = 0`.
    Mom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplinePriorConfig {
    pub prior_kind: PriorKind,
    /// Prior scale: `γ` pieces have covariance `c I`, or `c σ² I` with
    /// `scale_by_sigma2`.
    pub c: f64,
    /// Tie the `γ` prior to the noise level. With this on, small `σ²` shrinks
    /// every derivative value towards zero and the calibrated tests lose most
    /// of their power, so it is off by default.
    pub scale_by_sigma2: bool,
    /// Prior probability of the monotone orthant given a non-empty model.
    pub q1: f64,
    /// Prior probability that a coefficient is excluded.
    pub p_exclude: f64,
    pub alpha_prior_var: f64,
    /// Upper end of the flat prior on `σ²`.
    pub sigma2_max: f64,
    pub n_knots: usize,
    pub burn_in: usize,
    pub sweeps: usize,
    /// Visit coefficients in a fresh random order every sweep instead of ascending order.
    pub random_scan: bool,
    pub seed: u64,
    /// Hold `σ²` at this value instead of sampling it.
    pub fixed_sigma2: Option<f64>,
    /// Hold `α` at this value instead of sampling it.
    pub fixed_alpha: Option<f64>,
    /// Drop the likelihood so the chain targets the prior.
    pub prior_only: bool,
}

impl SplinePriorConfig {
    pub fn gaussian() -> Self {
        Self {
            prior_kind: PriorKind::Gaussian,
            c: 100.0,
            scale_by_sigma2: false,
            q1: 0.1,
            p_exclude: 0.8,
            alpha_prior_var: 1e10,
            sigma2_max: 1e3,
            n_knots: 33,
            burn_in: 20_000,
            sweeps: 100_000,
            random_scan: false,
            seed: 0,
            fixed_sigma2: None,
            fixed_alpha: None,
            prior_only: false,
        }
    }

    pub fn mom() -> Self {
        Self {
            prior_kind: PriorKind::Mom,
            c: 10.0,
            ..Self::gaussian()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("regression spline: {what}")));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if !(self.q1 > 0.0 && self.q1 < 1.0) {
            return bad("q1 must lie in (0, 1)");
        }
        if !(self.p_exclude > 0.0 && self.p_exclude <= 1.0) {
            return bad("p_exclude must lie in (0, 1]");
        }
        if !(self.alpha_prior_var > 0.0 && self.sigma2_max > 0.0) {
            return bad("alpha_prior_var and sigma2_max must be positive");
        }
        if self.sweeps == 0 {
            return bad("need at least one retained sweep");
        }
        if let Some(s) = self.fixed_sigma2 {
            if !(s > 0.0 && s <= self.sigma2_max) {
                return bad("fixed_sigma2 must lie in (0, sigma2_max]");
            }
        }
        Ok(())
    }

    /// `q₁ (1 − p_e^{m+2}) + p_e^{m+2}`: the empty model counts as monotone.
    pub fn prior_p_monotone(&self, n_coef: usize) -> f64 {
        let empty = self.p_exclude.powi(n_coef as i32);
        self.q1 * (1.0 - empty) + empty
    }

    /// Variance of each `γ` coordinate before truncation.
    pub fn prior_variance(&self, sigma2: f64) -> f64 {
        if self.scale_by_sigma2 {
            self.c * sigma2
        } else {
            self.c
        }
    }

    /// Log weight of the orthant containing a `p`-vector.
    pub fn log_orthant_weight(&self, p: usize, all_nonneg: bool) -> f64 {
        if all_nonneg {
            self.q1.ln()
        } else {
            (1.0 - self.q1).ln() - log_two_pow_minus_one(p)
        }
    }
}

impl Default for SplinePriorConfig {
    fn default() -> Self {
        Self::gaussian()
    }
}

/// `ln(2^p − 1)` for `p ≥ 1`.
pub fn log_two_pow_minus_one(p: usize) -> f64 {
    p as f64 * LN_2 + (-(0.5f64).powi(p as i32)).ln_1p()
}

/// Log prior density of `γ` given its model and `σ²`.
///
/// Gaussian: `q_d 2^p N(γ | 0, v I)` with `v` the prior variance. Method of
/// moments: the same times `γ'γ / (p v)`. The empty vector has density one.
pub fn log_prior_gamma(gamma: &[f64], prior: &SplinePriorConfig, sigma2: f64) -> f64 {
    let p = gamma.len();
    if p == 0 {
        return 0.0;
    }
    let ss: f64 = gamma.iter().map(|g| g * g).sum();
    log_prior_from_summary(p, ss, gamma.iter().all(|g| *g >= 0.0), prior, sigma2)
}

/// [`log_prior_gamma`] from the dimension, squared norm and orthant of `γ`.
pub fn log_prior_from_summary(p: usize, ss: f64, all_nonneg: bool, prior: &SplinePriorConfig, sigma2: f64) -> f64 {
    if p == 0 {
        return 0.0;
    }
    let v = prior.prior_variance(sigma2);
    let pf = p as f64;
    let gauss = prior.log_orthant_weight(p, all_nonneg) + pf * LN_2 - pf * (LN_SQRT_2PI + 0.5 * v.ln()) - ss / (2.0 * v);
    match prior.prior_kind {
        PriorKind::Gaussian => gauss,
        PriorKind::Mom => gauss + ss.ln() - (pf * v).ln(),
    }
}
