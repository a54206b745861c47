//! Posterior summaries shared by every monotonicity test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The four Bayesian tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Smoothing,
    Gauss,
    Mom,
    Bonferroni,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smoothing, Method::Gauss, Method::Mom, Method::Bonferroni];

    pub fn name(self) -> &'static str {
        match self {
            Method::Smoothing => "smoothing",
            Method::Gauss => "gauss",
            Method::Mom => "mom",
            Method::Bonferroni => "bonferroni",
        }
    }

    /// Stable numeric tag used in seed derivation.
    pub fn tag(self) -> u64 {
        match self {
            Method::Smoothing => 1,
            Method::Gauss => 2,
            Method::Mom => 3,
            Method::Bonferroni => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Sampler-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    ParticleFilter {
        /// Effective sample size after each observation's reweighting.
        ess: Vec<f64>,
        resampling_steps: usize,
        /// Fraction of proposed Liu–West moves that were kept.
        jitter_acceptance: f64,
        /// Particles killed by invalid fractional-normal parameters.
        killed: usize,
        sigma2_hat: f64,
        /// Scale `ŝ` of the `τ` prior.
        tau_scale: f64,
    },
    Gibbs {
        sweeps: usize,
        burn_in: usize,
        /// Conditional-expectation estimate of the posterior monotone probability.
        p_monotone_rb: f64,
        #[serde(with = "float_text")]
        log_bayes_factor_rb: f64,
        mean_included: f64,
        /// Acceptance rate of the coefficient rejection sampler, 1 when unused.
        acceptance_rate: f64,
    },
    Increments {
        sweeps: usize,
        burn_in: usize,
        p_monotone_rb: f64,
        #[serde(with = "float_text")]
        log_bayes_factor_rb: f64,
        /// Log Bayes factor with the monotone probability replaced by the
        /// product of the per-increment posterior probabilities of `δ > 0`.
        /// Unlike the joint estimate it stays finite on noisy data.
        #[serde(with = "float_text")]
        log_bayes_factor_marginal: f64,
        /// Average fraction of increments labelled as half-normal.
        mean_truncated: f64,
        sigma2_hat: f64,
        w: f64,
    },
}

/// Posterior probability of monotonicity and the Bayes factor of monotone
/// against non-monotone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityResult {
    pub method: Method,
    pub p_monotone: f64,
    pub prior_p_monotone: f64,
    #[serde(with = "float_text")]
    pub log_bayes_factor: f64,
    #[serde(with = "float_text")]
    pub bayes_factor: f64,
    pub diagnostics: Diagnostics,
}

impl MonotonicityResult {
    /// Builds a result from log posterior masses of the two hypotheses.
    pub fn from_log_masses(
        method: Method,
        log_mono: f64,
        log_non: f64,
        prior_p_monotone: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        let log_bayes_factor = log_bayes_factor(log_mono, log_non, prior_p_monotone);
        let total = crate::numeric::log_add_exp(log_mono, log_non);
        Self {
            method,
            p_monotone: (log_mono - total).exp(),
            prior_p_monotone,
            log_bayes_factor,
            bayes_factor: log_bayes_factor.exp(),
            diagnostics,
        }
    }

    /// Evidence against monotonicity: larger means more non-monotone.
    pub fn evidence(&self) -> f64 {
        -self.log_bayes_factor
    }
}

/// `log` posterior odds minus `log` prior odds; infinite when one posterior mass vanishes.
pub fn log_bayes_factor(log_mono: f64, log_non: f64, prior_p_monotone: f64) -> f64 {
    let prior = prior_p_monotone.ln() - (-prior_p_monotone).ln_1p();
    match (log_mono.is_finite(), log_non.is_finite()) {
        (true, true) => log_mono - log_non - prior,
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => f64::NAN,
    }
}

/// Floats that may be infinite, written as JSON numbers when finite and as
/// the strings `"inf"`, `"-inf"`, `"nan"` otherwise.
pub mod float_text {
    use serde::de::{self, Deserializer};
    use serde::ser::Serializer;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number, found `{other}`"))),
            },
        }
    }

    /// Plain-text form used in CSV output.
    pub fn to_text(v: f64) -> String {
        if v.is_finite() {
            v.to_string()
        } else if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        #[serde(transparent)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(Wrap).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}
