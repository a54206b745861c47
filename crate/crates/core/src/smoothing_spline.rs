//! Constrained smoothing-spline test.
//!
//! The derivative `g = f'` is a scaled Wiener process conditioned so that its
//! first zero is at `ξ`; before `ξ` its increments are fractional normal,
//! after `ξ` it is a free random walk. `f` integrates `g` by an Euler step on
//! the observation grid. A Liu–West particle filter tracks `(g, f)` together
//! with the static parameters `(τ, ξ)`, and the posterior probability of
//! monotonicity is the filtered mass of `{ξ > 1}` plus the flat atom `τ = 0`.
//!
//! The observation variance and the scale of the `τ` prior come from the
//! local linear fit in [`crate::kernel_smooth`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{mean, sample_variance, Dataset};
use crate::error::{Error, Result};
use crate::frac_normal::{self, FracNormalParams};
use crate::kernel_smooth::{plug_in_estimates, SmoothFit};
use crate::numeric::{log_sum_exp, norm_cdf, std_normal};
use crate::result::{Diagnostics, Method, MonotonicityResult};

/// One filter hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub g: f64,
    pub f: f64,
    /// First zero of `g`; `+∞` for the flat atom, `≤ 0` for an unconstrained walk.
    pub xi: f64,
    pub tau: f64,
    pub flat: bool,
    pub log_weight: f64,
}

impl Particle {
    /// Monotone on `[0, 1]`: flat, or `g` has not yet hit zero by `x = 1`.
    pub fn is_monotone(&self) -> bool {
        self.flat || self.xi > 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub n_particles: usize,
    pub lw_discount: f64,
    pub prior_flat_mass: f64,
    /// The `τ` prior is Gamma with this shape and rate `gamma_rate_multiplier / ŝ`,
    /// where `ŝ` is the largest absolute slope of the pilot fit. The defaults
    /// put the prior mean at `ŝ`.
    pub gamma_shape: f64,
    pub gamma_rate_multiplier: f64,
    pub xi_prior_mean: f64,
    pub xi_prior_sd: f64,
    /// Resample when the effective sample size drops below this fraction of the population.
    pub ess_threshold: f64,
    pub seed: u64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            n_particles: 100_000,
            lw_discount: 0.98,
            prior_flat_mass: 1.0 / 3.0,
            gamma_shape: 3.0,
            gamma_rate_multiplier: 3.0,
            xi_prior_mean: 1.0,
            xi_prior_sd: 1.0,
            ess_threshold: 0.5,
            seed: 0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("smoothing: {what}")));
        if self.n_particles == 0 {
            return bad("n_particles must be positive");
        }
        if !(self.lw_discount > 0.0 && self.lw_discount < 1.0) {
            return bad("lw_discount must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.prior_flat_mass) {
            return bad("prior_flat_mass must lie in [0, 1]");
        }
        if !(self.gamma_shape > 0.0 && self.gamma_rate_multiplier > 0.0) {
            return bad("gamma_shape and gamma_rate_multiplier must be positive");
        }
        if !(self.xi_prior_sd > 0.0) || !self.xi_prior_mean.is_finite() {
            return bad("xi prior needs a finite mean and positive sd");
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return bad("ess_threshold must lie in (0, 1]");
        }
        Ok(())
    }

    /// Prior mass of `{flat} ∪ {ξ > 1}`.
    pub fn prior_p_monotone(&self) -> f64 {
        let p_xi = norm_cdf((self.xi_prior_mean - 1.0) / self.xi_prior_sd);
        self.prior_flat_mass + (1.0 - self.prior_flat_mass) * p_xi
    }

    /// Liu–West shrinkage `a = (3δ − 1) / (2δ)`.
    fn shrinkage(&self) -> f64 {
        (3.0 * self.lw_discount - 1.0) / (2.0 * self.lw_discount)
    }
}

/// Draws the initial population at `t = 0` with equal weights.
///
/// `y_mean` and `y_var` centre the prior on `f(0)`; `tau_scale` scales the `τ` prior.
pub fn init_particles<R: Rng + ?Sized>(
    config: &SmoothingConfig,
    tau_scale: f64,
    y_mean: f64,
    y_var: f64,
    rng: &mut R,
) -> Result<Vec<Particle>> {
    let tau_prior = Gamma::new(config.gamma_shape, tau_scale / config.gamma_rate_multiplier)
        .map_err(|e| Error::Config(format!("tau prior: {e}")))?;
    let f_sd = y_var.max(0.0).sqrt();
    let log_w = -(config.n_particles as f64).ln();
    let particles = (0..config.n_particles)
        .map(|_| {
            let f = y_mean + f_sd * std_normal(rng);
            if rng.random::<f64>() < config.prior_flat_mass {
                return Particle {
                    g: 0.0,
                    f,
                    xi: f64::INFINITY,
                    tau: 0.0,
                    flat: true,
                    log_weight: log_w,
                };
            }
            let tau = tau_prior.sample(rng);
            let xi = config.xi_prior_mean + config.xi_prior_sd * std_normal(rng);
            // g(0) is the Wiener start conditioned on a later crossing at ξ.
            let g = if xi <= 0.0 {
                tau * std_normal(rng)
            } else {
                tau * xi.sqrt() * std_normal(rng).abs()
            };
            Particle {
                g,
                f,
                xi,
                tau,
                flat: false,
                log_weight: log_w,
            }
        })
        .collect();
    Ok(particles)
}

/// Outcome of a single propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Moved,
    /// The pre-crossing law was not defined for this particle; its weight is now zero.
    Killed,
}

/// Moves one particle from `t_prev` to `t_next`.
pub fn propagate<R: Rng + ?Sized>(p: &mut Particle, t_prev: f64, t_next: f64, rng: &mut R) -> Step {
    let dt = t_next - t_prev;
    p.f += dt * p.g;
    if p.flat {
        return Step::Moved;
    }
    if p.xi <= t_prev {
        p.g += p.tau * dt.sqrt() * std_normal(rng);
    } else if p.xi <= t_next {
        p.g = p.tau * (t_next - p.xi).sqrt() * std_normal(rng);
    } else {
        match FracNormalParams::new(p.g, p.xi, p.tau, t_prev, t_next) {
            Ok(params) => p.g = frac_normal::sample(&params, rng),
            Err(_) => {
                p.log_weight = f64::NEG_INFINITY;
                return Step::Killed;
            }
        }
    }
    Step::Moved
}

/// Normalises log weights in place and returns the effective sample size.
fn normalise(particles: &mut [Particle], scratch: &mut Vec<f64>) -> Option<f64> {
    scratch.clear();
    scratch.extend(particles.iter().map(|p| p.log_weight));
    let total = log_sum_exp(scratch);
    if !total.is_finite() {
        return None;
    }
    let mut sum_sq = 0.0;
    for p in particles.iter_mut() {
        p.log_weight -= total;
        let w = p.log_weight.exp();
        sum_sq += w * w;
    }
    Some(1.0 / sum_sq)
}

/// Systematic resampling; returns equally weighted copies.
fn resample<R: Rng + ?Sized>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    let log_w = -(n as f64).ln();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(n);
    for p in particles {
        cum += p.log_weight.exp();
        while u < cum && out.len() < n {
            out.push(Particle { log_weight: log_w, ..*p });
            u += step;
        }
    }
    // Rounding can leave the last few slots empty; fill from the last live particle.
    let fallback = particles
        .iter()
        .rev()
        .find(|p| p.log_weight.is_finite())
        .copied()
        .unwrap_or(particles[n - 1]);
    while out.len() < n {
        out.push(Particle { log_weight: log_w, ..fallback });
    }
    out
}

/// Liu–West kernel move on `(log τ, ξ)` of the non-flat particles. Returns
/// `(proposed, accepted)` move counts.
fn jitter<R: Rng + ?Sized>(particles: &mut [Particle], a: f64, t: f64, rng: &mut R) -> (usize, usize) {
    let (mut w_sum, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for p in particles.iter().filter(|p| !p.flat) {
        let w = p.log_weight.exp();
        w_sum += w;
        m1 += w * p.tau.ln();
        m2 += w * p.xi;
    }
    if !(w_sum > 0.0) {
        return (0, 0);
    }
    m1 /= w_sum;
    m2 /= w_sum;
    let (mut v11, mut v12, mut v22) = (0.0, 0.0, 0.0);
    for p in particles.iter().filter(|p| !p.flat) {
        let w = p.log_weight.exp() / w_sum;
        let (d1, d2) = (p.tau.ln() - m1, p.xi - m2);
        v11 += w * d1 * d1;
        v12 += w * d1 * d2;
        v22 += w * d2 * d2;
    }
    // Cholesky factor of (1 − a²) V.
    let k = 1.0 - a * a;
    let l11 = (k * v11).max(0.0).sqrt();
    let l21 = if l11 > 0.0 { k * v12 / l11 } else { 0.0 };
    let l22 = (k * v22 - l21 * l21).max(0.0).sqrt();
    let (mut proposed, mut accepted) = (0, 0);
    for p in particles.iter_mut().filter(|p| !p.flat) {
        let (z1, z2) = (std_normal(rng), std_normal(rng));
        let log_tau = a * p.tau.ln() + (1.0 - a) * m1 + l11 * z1;
        let xi = a * p.xi + (1.0 - a) * m2 + l21 * z1 + l22 * z2;
        proposed += 1;
        // A particle still before its crossing needs g > 0.
        if xi > t && p.g <= 0.0 {
            continue;
        }
        p.tau = log_tau.exp();
        p.xi = xi;
        accepted += 1;
    }
    (proposed, accepted)
}

/// Runs the filter over raw observations with a known observation variance.
///
/// Unlike [`run_filter`] this accepts any number of observations, which is
/// useful for checking the no-data limits.
pub fn run_filter_with_estimates(
    x: &[f64],
    y: &[f64],
    sigma2: f64,
    tau_scale: f64,
    config: &SmoothingConfig,
) -> Result<MonotonicityResult> {
    config.validate()?;
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidData("x and y must be non-empty and of equal length".into()));
    }
    if !(sigma2 > 0.0) || !(tau_scale > 0.0) {
        return Err(Error::Domain(format!("need σ² > 0 and a positive τ scale, got {sigma2} and {tau_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let y_var = if y.len() >= 2 { sample_variance(y) } else { sigma2 };
    let mut particles = init_particles(config, tau_scale, mean(y), y_var, &mut rng)?;
    let n_particles = particles.len();
    let a = config.shrinkage();
    let inv_two_sigma2 = 0.5 / sigma2;
    let mut scratch = Vec::with_capacity(n_particles);
    let mut ess_path = Vec::with_capacity(x.len());
    let (mut resampling_steps, mut killed, mut proposed, mut accepted) = (0, 0, 0, 0);
    let mut t_prev = 0.0;
    for (step, (&t, &obs)) in x.iter().zip(y).enumerate() {
        for p in particles.iter_mut() {
            if p.log_weight == f64::NEG_INFINITY {
                continue;
            }
            if propagate(p, t_prev, t, &mut rng) == Step::Killed {
                killed += 1;
                continue;
            }
            let r = obs - p.f;
            p.log_weight -= r * r * inv_two_sigma2;
        }
        let ess = normalise(&mut particles, &mut scratch).ok_or(Error::FilterDegenerate { step: step + 1 })?;
        ess_path.push(ess);
        if ess < config.ess_threshold * n_particles as f64 {
            particles = resample(&particles, &mut rng);
            resampling_steps += 1;
            let (prop, acc) = jitter(&mut particles, a, t, &mut rng);
            proposed += prop;
            accepted += acc;
        }
        t_prev = t;
    }
    scratch.clear();
    scratch.extend(particles.iter().filter(|p| p.is_monotone()).map(|p| p.log_weight));
    let log_mono = log_sum_exp(&scratch);
    scratch.clear();
    scratch.extend(particles.iter().filter(|p| !p.is_monotone()).map(|p| p.log_weight));
    let log_non = log_sum_exp(&scratch);
    let diagnostics = Diagnostics::ParticleFilter {
        ess: ess_path,
        resampling_steps,
        jitter_acceptance: if proposed > 0 { accepted as f64 / proposed as f64 } else { 1.0 },
        killed,
        sigma2_hat: sigma2,
        tau_scale,
    };
    Ok(MonotonicityResult::from_log_masses(
        Method::Smoothing,
        log_mono,
        log_non,
        config.prior_p_monotone(),
        diagnostics,
    ))
}

/// Plug-in estimates followed by the particle filter.
pub fn run_filter(data: &Dataset, config: &SmoothingConfig) -> Result<MonotonicityResult> {
    let SmoothFit { sigma2_hat, slope_scale, .. } = plug_in_estimates(data)?;
    run_filter_with_estimates(data.x(), data.y(), sigma2_hat, slope_scale, config)
}
