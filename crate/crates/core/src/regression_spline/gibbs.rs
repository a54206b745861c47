//! Gibbs sampler over `(ι, γ, α, σ²)` in the derivative-value parametrisation.
//!
//! Given `ι` and `γ`, `f'` is piecewise linear through nodes at `0`, the
//! included knots and `1`, so the fitted curve is the running integral of that
//! interpolant. Each coefficient update draws `ι_j` with `γ_j` integrated out,
//! then `γ_j` from its two-piece conditional.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use super::basis::{included, KnotBasis};
use super::prior::{log_two_pow_minus_one, PriorKind, SplinePriorConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{
    log_add_exp, log_half_second_moment, log_norm_cdf, normal_above, open_unit, std_normal, LN_2,
    LN_SQRT_2PI,
};
use crate::result::{log_bayes_factor, Diagnostics, Method, MonotonicityResult};

/// Floor on the residual sum of squares in the `σ²` update.
const SS_FLOOR: f64 = 1e-12;

/// Current values of every unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineState {
    pub iota: Vec<bool>,
    /// Full length; entries of excluded coefficients are zero.
    pub gamma: Vec<f64>,
    pub alpha: f64,
    pub sigma2: f64,
}

impl SplineState {
    pub fn p(&self) -> usize {
        self.iota.iter().filter(|b| **b).count()
    }

    /// `γ_ι`, the included entries in coefficient order.
    pub fn included_gamma(&self) -> Vec<f64> {
        included(&self.iota).into_iter().map(|j| self.gamma[j]).collect()
    }

    /// Derivative values are non-negative at every evaluation point; the empty model counts.
    pub fn is_monotone(&self) -> bool {
        self.iota.iter().zip(&self.gamma).all(|(on, g)| !on || *g >= 0.0)
    }
}

/// Nodes `(t, f'(t))` of the piecewise-linear derivative for `(ι, γ)`: `0`,
/// the included knots and `1`.
///
/// Values pair with nodes in order: the linear term owns `0` (else
/// `f'(0) = 0`), the quadratic term owns the first node after it (else that
/// node repeats the previous value), and each knot term owns the node after
/// its knot.
pub fn derivative_nodes(basis: &KnotBasis, iota: &[bool], gamma: &[f64], out: &mut Vec<(f64, f64)>) {
    out.clear();
    let start = if iota[0] { gamma[0] } else { 0.0 };
    out.push((0.0, start));
    let mut next = if iota[1] { gamma[1] } else { start };
    for (k, &t) in basis.knots().iter().enumerate() {
        if iota[k + 2] {
            out.push((t, next));
            next = gamma[k + 2];
        }
    }
    out.push((1.0, next));
}

/// `∫₀^{x_i}` of the interpolant through `nodes`, for increasing `x`.
pub fn integrate_nodes(nodes: &[(f64, f64)], x: &[f64], out: &mut [f64]) {
    let mut k = 1;
    let mut cum = 0.0;
    let ((mut t0, mut v0), (mut t1, mut v1)) = (nodes[0], nodes[1]);
    let mut half_slope = 0.5 * (v1 - v0) / (t1 - t0);
    for (xi, o) in x.iter().zip(out.iter_mut()) {
        while k + 1 < nodes.len() && *xi > t1 {
            cum += 0.5 * (v0 + v1) * (t1 - t0);
            k += 1;
            (t0, v0) = (t1, v1);
            (t1, v1) = nodes[k];
            half_slope = 0.5 * (v1 - v0) / (t1 - t0);
        }
        let d = xi - t0;
        *o = cum + d * (v0 + half_slope * d);
    }
}

/// Fitted `f(x_i) − α` for a state.
pub fn fitted_without_intercept(basis: &KnotBasis, x: &[f64], iota: &[bool], gamma: &[f64]) -> Vec<f64> {
    let mut nodes = Vec::new();
    derivative_nodes(basis, iota, gamma, &mut nodes);
    let mut out = vec![0.0; x.len()];
    integrate_nodes(&nodes, x, &mut out);
    out
}

/// Samples `t > 0` with density proportional to `t² φ(t − z)`.
fn sample_squared_normal<R: Rng + ?Sized>(z: f64, rng: &mut R, tries: &mut (u64, u64)) -> f64 {
    if z < -3.0 {
        // Gamma(3, −z) proposal; the ratio to the target is e^{−t²/2}.
        let proposal = Gamma::new(3.0, -1.0 / z).expect("positive scale");
        loop {
            tries.0 += 1;
            let t = proposal.sample(rng);
            if open_unit(rng).ln() <= -0.5 * t * t {
                tries.1 += 1;
                return t;
            }
        }
    }
    // Normal proposal centred at the target's mode m; the ratio t² e^{−(m−z)t} peaks at m.
    let m = 0.5 * (z + (z * z + 8.0).sqrt());
    loop {
        tries.0 += 1;
        let t = normal_above(rng, m, 1.0, 0.0);
        if open_unit(rng).ln() <= 2.0 * (t / m).ln() - (m - z) * (t - m) {
            tries.1 += 1;
            return t;
        }
    }
}

/// `σ²` whose conditional CDF equals `u`, for the density proportional to
/// `(σ²)^{−a−1} exp(−b/σ²)` on `(0, sigma2_max]`.
pub fn sigma2_inverse_cdf(a: f64, b: f64, sigma2_max: f64, u: f64) -> f64 {
    // In λ = 1/σ², Gamma(a, b) restricted to λ ≥ 1/sigma2_max; P(σ² ≤ s) = Q(a, b/s) / Q(a, b/max).
    let q_min = gamma_ur(a, b / sigma2_max);
    let target = u * q_min;
    let (mut lo, mut hi) = ((1.0 / sigma2_max).ln(), (1.0 / sigma2_max).ln());
    // Expand upward until the upper tail falls below the target.
    while gamma_ur(a, b * hi.exp()) > target {
        hi += 1.0;
        if hi > 745.0 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_ur(a, b * mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    (-(0.5 * (lo + hi))).exp()
}

/// Conditional CDF of `σ²` at `s`; the inverse of [`sigma2_inverse_cdf`].
pub fn sigma2_cdf(a: f64, b: f64, sigma2_max: f64, s: f64) -> f64 {
    gamma_ur(a, b / s) / gamma_ur(a, b / sigma2_max)
}

fn sample_sigma2<R: Rng + ?Sized>(a: f64, b: f64, sigma2_max: f64, rng: &mut R) -> f64 {
    let lambda_min = 1.0 / sigma2_max;
    if gamma_lr(a, b * lambda_min) < 0.5 {
        let g = Gamma::new(a, 1.0 / b).expect("positive shape and rate");
        for _ in 0..32 {
            let lambda: f64 = g.sample(rng);
            if lambda >= lambda_min {
                return 1.0 / lambda;
            }
        }
    }
    sigma2_inverse_cdf(a, b, sigma2_max, open_unit(rng))
}

/// Per-update quantities, exposed for checks against direct integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientConditional {
    /// Unnormalised log probabilities of excluding and including the coefficient.
    pub log_p0: f64,
    pub log_p1: f64,
    /// Log masses of the negative and positive pieces of `γ_j` given inclusion.
    pub log_neg: f64,
    pub log_pos: f64,
    pub mu: f64,
    pub sd: f64,
    /// Squared norm of the other included coefficients.
    pub others_ss: f64,
    pub others_nonneg: bool,
}

/// Reusable buffers and the bookkeeping for one chain.
struct Chain<'a> {
    basis: &'a KnotBasis,
    x: &'a [f64],
    y: &'a [f64],
    prior: &'a SplinePriorConfig,
    state: SplineState,
    /// `y − α − f(x) + α`, i.e. the residual of the current fit.
    resid: Vec<f64>,
    nodes: Vec<(f64, f64)>,
    nodes_b: Vec<(f64, f64)>,
    unit: Vec<(f64, f64)>,
    diff: Vec<(f64, f64)>,
    w: Vec<f64>,
    d: Vec<f64>,
    ytilde: Vec<f64>,
    /// `w` and `d` vanish before this index; residual terms there cancel
    /// between inclusion and exclusion and are skipped.
    start: usize,
    /// `ỹ'ỹ`, `w'ỹ`, `w'w` and `|ỹ − d|²` over the support.
    sums: [f64; 4],
    consts: Constants,
    /// Log prior variance of each `γ` coordinate at the current `σ²`.
    ln_v: f64,
    tries: (u64, u64),
}

/// Logarithms that stay fixed for a whole chain.
struct Constants {
    ln_exclude: f64,
    ln_include: f64,
    ln_q1: f64,
    ln_1m_q1: f64,
    /// `ln(2^r − 1)` indexed by `r`.
    ln_two_pow_m1: Vec<f64>,
}

impl Constants {
    fn new(prior: &SplinePriorConfig, n_coef: usize) -> Self {
        Self {
            ln_exclude: prior.p_exclude.ln(),
            ln_include: (-prior.p_exclude).ln_1p(),
            ln_q1: prior.q1.ln(),
            ln_1m_q1: (-prior.q1).ln_1p(),
            ln_two_pow_m1: (0..=n_coef).map(|r| if r == 0 { f64::NEG_INFINITY } else { log_two_pow_minus_one(r) }).collect(),
        }
    }
}

/// One interval between consecutive nodes of the unit response and the
/// exclusion difference.
struct Segment {
    t0: f64,
    w0: f64,
    d0: f64,
    half_slope_w: f64,
    half_slope_d: f64,
    area_w: f64,
    area_d: f64,
}

impl Segment {
    fn new(unit: &[(f64, f64)], diff: &[(f64, f64)], k: usize) -> Self {
        let (t0, w0) = unit[k];
        let (t1, w1) = unit[k + 1];
        let (d0, d1) = (diff[k].1, diff[k + 1].1);
        let h = t1 - t0;
        Self {
            t0,
            w0,
            d0,
            half_slope_w: 0.5 * (w1 - w0) / h,
            half_slope_d: 0.5 * (d1 - d0) / h,
            area_w: 0.5 * (w0 + w1) * h,
            area_d: 0.5 * (d0 + d1) * h,
        }
    }
}

impl<'a> Chain<'a> {
    fn new(basis: &'a KnotBasis, x: &'a [f64], y: &'a [f64], prior: &'a SplinePriorConfig, state: SplineState) -> Self {
        let fit = fitted_without_intercept(basis, x, &state.iota, &state.gamma);
        let state_sigma2 = state.sigma2;
        let resid = y.iter().zip(&fit).map(|(yi, fi)| yi - state.alpha - fi).collect();
        let n = x.len();
        Self {
            basis,
            x,
            y,
            prior,
            state,
            resid,
            nodes: Vec::new(),
            nodes_b: Vec::new(),
            unit: Vec::new(),
            diff: Vec::new(),
            w: vec![0.0; n],
            d: vec![0.0; n],
            ytilde: vec![0.0; n],
            start: 0,
            sums: [0.0; 4],
            consts: Constants::new(prior, basis.n_coef()),
            ln_v: prior.prior_variance(state_sigma2).ln(),
            tries: (0, 0),
        }
    }

    /// Fills `w` (unit change in `γ_j` under inclusion), `d` (fit without `j`
    /// minus fit with `γ_j = 0`) and `ytilde`.
    fn prepare(&mut self, j: usize) {
        let (on, gj) = (self.state.iota[j], self.state.gamma[j]);
        let SplineState { iota, gamma, .. } = &mut self.state;
        iota[j] = true;
        gamma[j] = 0.0;
        derivative_nodes(self.basis, iota, gamma, &mut self.nodes_b);
        // Node values are linear in γ, so the unit response is a difference.
        gamma[j] = 1.0;
        derivative_nodes(self.basis, iota, gamma, &mut self.unit);
        for (u, b) in self.unit.iter_mut().zip(&self.nodes_b) {
            u.1 -= b.1;
        }
        iota[j] = false;
        derivative_nodes(self.basis, iota, gamma, &mut self.nodes);
        iota[j] = on;
        gamma[j] = gj;
        // The excluded model's nodes are a subset, so interpolation is exact.
        self.diff.clear();
        let mut k = 1;
        for &(t, vb) in &self.nodes_b {
            while k + 1 < self.nodes.len() && self.nodes[k].0 < t {
                k += 1;
            }
            let (t0, v0) = self.nodes[k - 1];
            let (t1, v1) = self.nodes[k];
            self.diff.push((t, v0 + (v1 - v0) * (t - t0) / (t1 - t0) - vb));
        }
        let nonzero = |n: &[(f64, f64)]| n.iter().position(|u| u.1 != 0.0).unwrap_or(n.len());
        let first = nonzero(&self.diff).min(nonzero(&self.unit));
        let t_start = if first == 0 { 0.0 } else { self.nodes_b[first - 1].0 };
        let st = self.x.partition_point(|v| *v <= t_start);
        self.start = st;

        // One pass: both integrals (they share node positions), ỹ and the sums.
        let g = if on { gj } else { 1.0 };
        let (unit, diff) = (&self.unit, &self.diff);
        let mut k = 1;
        let (mut cum_w, mut cum_d) = (0.0, 0.0);
        let mut seg = Segment::new(unit, diff, 0);
        let mut sums = [0.0; 4];
        for i in st..self.x.len() {
            let xi = self.x[i];
            while k + 1 < unit.len() && xi > unit[k].0 {
                cum_w += seg.area_w;
                cum_d += seg.area_d;
                seg = Segment::new(unit, diff, k);
                k += 1;
            }
            let t = xi - seg.t0;
            let w = cum_w + t * (seg.w0 + seg.half_slope_w * t);
            let d = cum_d + t * (seg.d0 + seg.half_slope_d * t);
            let yt = self.resid[i] + g * if on { w } else { d };
            self.w[i] = w;
            self.d[i] = d;
            self.ytilde[i] = yt;
            sums[0] += yt * yt;
            sums[1] += w * yt;
            sums[2] += w * w;
            sums[3] += (yt - d) * (yt - d);
        }
        self.sums = sums;
    }

    fn conditional(&self, j: usize) -> Option<CoefficientConditional> {
        let prior = self.prior;
        let sigma2 = self.state.sigma2;
        let v = prior.prior_variance(sigma2);
        let (mut s, mut ss, mut nonneg) = (0usize, 0.0, true);
        for (k, (on, g)) in self.state.iota.iter().zip(&self.state.gamma).enumerate() {
            if *on && k != j {
                s += 1;
                ss += g * g;
                nonneg &= *g >= 0.0;
            }
        }
        let [yty, wty, wtw, rss_a] = if prior.prior_only { [0.0; 4] } else { self.sums };
        if !prior.prior_only && !(wtw > 1e-300) {
            return None;
        }
        let mom = prior.prior_kind == PriorKind::Mom;
        let k = &self.consts;
        let ln_v = self.ln_v;
        // Normal density of r coefficients with the 2^r orthant factor.
        let ln_normal = |r: usize| r as f64 * (LN_2 - LN_SQRT_2PI - 0.5 * ln_v) - ss / (2.0 * v);
        let mut log_p0 = k.ln_exclude - rss_a / (2.0 * sigma2);
        if s > 0 {
            log_p0 += if nonneg { k.ln_q1 } else { k.ln_1m_q1 - k.ln_two_pow_m1[s] } + ln_normal(s);
            if mom {
                log_p0 += ss.ln() - (s as f64).ln() - ln_v;
            }
        }

        let r = s + 1;
        let rf = r as f64;
        let a = wtw + sigma2 / v;
        let mu = wty / a;
        let tau2 = sigma2 / a;
        let sd = tau2.sqrt();
        let z = mu / sd;
        let log_a_neg = k.ln_1m_q1 - k.ln_two_pow_m1[r];
        let log_a_pos = if nonneg { k.ln_q1 } else { log_a_neg };
        let (log_i_neg, log_i_pos) = if mom {
            let ls = ss.ln();
            (
                log_add_exp(tau2.ln() + log_half_second_moment(-z), ls + log_norm_cdf(-z)),
                log_add_exp(tau2.ln() + log_half_second_moment(z), ls + log_norm_cdf(z)),
            )
        } else {
            (log_norm_cdf(-z), log_norm_cdf(z))
        };
        let log_neg = log_a_neg + log_i_neg;
        let log_pos = log_a_pos + log_i_pos;
        let mut log_p1 = k.ln_include - (yty - wty * wty / a) / (2.0 * sigma2)
            + ln_normal(r)
            + LN_SQRT_2PI
            + 0.5 * tau2.ln()
            + log_add_exp(log_neg, log_pos);
        if mom {
            log_p1 -= rf.ln() + ln_v;
        }
        Some(CoefficientConditional {
            log_p0,
            log_p1,
            log_neg,
            log_pos,
            mu,
            sd,
            others_ss: ss,
            others_nonneg: nonneg,
        })
    }

    /// One joint update of `(ι_j, γ_j)`. Returns the conditional used (none
    /// when the column is degenerate and the coefficient is forced out) and the
    /// conditional probabilities of the monotone and non-monotone events.
    fn update_coefficient<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> (Option<CoefficientConditional>, [f64; 2]) {
        self.prepare(j);
        let cond = self.conditional(j);
        let (include, event) = match &cond {
            None => (false, [0.0; 2]),
            Some(c) => {
                let p0 = 1.0 / (1.0 + (c.log_p1 - c.log_p0).exp());
                let p1 = 1.0 / (1.0 + (c.log_p0 - c.log_p1).exp());
                let event = if c.others_nonneg {
                    let pos = 1.0 / (1.0 + (c.log_neg - c.log_pos).exp());
                    let neg = 1.0 / (1.0 + (c.log_pos - c.log_neg).exp());
                    [p0 + p1 * pos, p1 * neg]
                } else {
                    [0.0, 1.0]
                };
                (rng.random::<f64>() < p1, event)
            }
        };
        if include {
            let c = cond.as_ref().expect("inclusion requires a conditional");
            let positive = rng.random::<f64>() * (1.0 + (c.log_neg - c.log_pos).exp()) < 1.0;
            let g = self.sample_gamma(c, positive, rng);
            self.state.iota[j] = true;
            self.state.gamma[j] = g;
            let st = self.start;
            for ((r, yt), w) in self.resid[st..].iter_mut().zip(&self.ytilde[st..]).zip(&self.w[st..]) {
                *r = yt - g * w;
            }
            (cond, event)
        } else {
            self.state.iota[j] = false;
            self.state.gamma[j] = 0.0;
            let st = self.start;
            for ((r, yt), d) in self.resid[st..].iter_mut().zip(&self.ytilde[st..]).zip(&self.d[st..]) {
                *r = yt - d;
            }
            if cond.is_none() {
                let mono = self.state.is_monotone();
                return (cond, [f64::from(u8::from(mono)), f64::from(u8::from(!mono))]);
            }
            (cond, event)
        }
    }

    fn sample_gamma<R: Rng + ?Sized>(&mut self, c: &CoefficientConditional, positive: bool, rng: &mut R) -> f64 {
        // Reflect the negative piece onto the positive half-line.
        let (mu, sign) = if positive { (c.mu, 1.0) } else { (-c.mu, -1.0) };
        let magnitude = match self.prior.prior_kind {
            PriorKind::Gaussian => normal_above(rng, mu, c.sd, 0.0),
            PriorKind::Mom => {
                let z = mu / c.sd;
                // (γ² + S) N(γ | μ, τ²) splits into a γ²-weighted piece and a plain piece.
                let log_sq = 2.0 * c.sd.ln() + log_half_second_moment(z);
                let log_plain = c.others_ss.ln() + log_norm_cdf(z);
                if rng.random::<f64>() * (1.0 + (log_plain - log_sq).exp()) < 1.0 {
                    c.sd * sample_squared_normal(z, rng, &mut self.tries)
                } else {
                    normal_above(rng, mu, c.sd, 0.0)
                }
            }
        };
        sign * magnitude
    }

    fn update_alpha<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.prior.fixed_alpha.is_some() {
            return;
        }
        let old = self.state.alpha;
        let new = if self.prior.prior_only {
            self.prior.alpha_prior_var.sqrt() * std_normal(rng)
        } else {
            let n = self.y.len() as f64;
            let sum: f64 = self.resid.iter().map(|r| r + old).sum();
            let prec = n / self.state.sigma2 + 1.0 / self.prior.alpha_prior_var;
            sum / self.state.sigma2 / prec + prec.recip().sqrt() * std_normal(rng)
        };
        for r in self.resid.iter_mut() {
            *r += old - new;
        }
        self.state.alpha = new;
    }

    fn update_sigma2<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.prior.fixed_sigma2.is_some() {
            return;
        }
        let p = self.state.p();
        let ss: f64 = self.resid.iter().map(|r| r * r).sum();
        let n = self.y.len() as f64;
        let (a, b) = if self.prior.scale_by_sigma2 {
            // The γ prior then contributes p/2 shape, plus one for the MoM factor.
            let k = if self.prior.prior_kind == PriorKind::Mom && p > 0 { 1.0 } else { 0.0 };
            let gg: f64 = self.state.gamma.iter().map(|g| g * g).sum();
            ((n + p as f64) / 2.0 + k - 1.0, 0.5 * (ss + gg / self.prior.c))
        } else {
            (n / 2.0 - 1.0, 0.5 * ss)
        };
        self.state.sigma2 = sample_sigma2(a, b.max(SS_FLOOR), self.prior.sigma2_max, rng);
        self.ln_v = self.prior.prior_variance(self.state.sigma2).ln();
    }
}

/// Draws `(ι_j, γ_j)` from its full conditional and returns the new state
/// along with the conditional it used (`None` when the coefficient's column is
/// degenerate and it was forced out).
pub fn gibbs_update_coefficient<R: Rng + ?Sized>(
    j: usize,
    state: SplineState,
    data: &Dataset,
    basis: &KnotBasis,
    prior: &SplinePriorConfig,
    rng: &mut R,
) -> (SplineState, Option<CoefficientConditional>) {
    let mut chain = Chain::new(basis, data.x(), data.y(), prior, state);
    let (cond, _) = chain.update_coefficient(j, rng);
    (chain.state, cond)
}

/// Joint draw of `α` then `σ²` from their full conditionals.
pub fn sample_alpha_sigma2<R: Rng + ?Sized>(
    state: SplineState,
    data: &Dataset,
    basis: &KnotBasis,
    prior: &SplinePriorConfig,
    rng: &mut R,
) -> SplineState {
    let mut chain = Chain::new(basis, data.x(), data.y(), prior, state);
    chain.update_alpha(rng);
    chain.update_sigma2(rng);
    chain.state
}

/// Tallies collected over the retained sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub monotone_sweeps: usize,
    pub sweeps: usize,
    /// Log of the summed conditional monotone probabilities.
    pub log_rb_mono: f64,
    pub log_rb_non: f64,
    pub mean_included: f64,
    pub acceptance_rate: f64,
    pub final_state: SplineState,
}

/// Runs a chain on raw observations and returns its tallies; `record` sees
/// every retained state.
pub fn run_chain<F: FnMut(&SplineState)>(
    x: &[f64],
    y: &[f64],
    basis: &KnotBasis,
    prior: &SplinePriorConfig,
    mut record: F,
) -> Result<ChainSummary> {
    prior.validate()?;
    if prior.prior_only && prior.fixed_sigma2.is_none() {
        return Err(Error::Config("prior-only runs need fixed_sigma2".into()));
    }
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidData("need at least two observations of matching length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(prior.seed);
    let n_coef = basis.n_coef();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / (y.len() - 1) as f64;
    let state = SplineState {
        iota: vec![false; n_coef],
        gamma: vec![0.0; n_coef],
        alpha: prior.fixed_alpha.unwrap_or(y_mean),
        sigma2: prior.fixed_sigma2.unwrap_or(y_var.clamp(SS_FLOOR, prior.sigma2_max)),
    };
    let mut chain = Chain::new(basis, x, y, prior, state);
    let mut order: Vec<usize> = (0..n_coef).collect();
    let (mut monotone_sweeps, mut included_total) = (0usize, 0usize);
    // Conditional event probabilities summed over every retained update.
    let (mut rb_mono, mut rb_non) = (0.0f64, 0.0f64);
    for sweep in 0..prior.burn_in + prior.sweeps {
        let keep = sweep >= prior.burn_in;
        if prior.random_scan {
            order.shuffle(&mut rng);
        }
        for &j in &order {
            let (_, [mono, non]) = chain.update_coefficient(j, &mut rng);
            if keep {
                rb_mono += mono;
                rb_non += non;
            }
        }
        chain.update_alpha(&mut rng);
        chain.update_sigma2(&mut rng);
        if keep {
            monotone_sweeps += usize::from(chain.state.is_monotone());
            included_total += chain.state.p();
            record(&chain.state);
        }
    }
    let (tries, accepts) = chain.tries;
    Ok(ChainSummary {
        monotone_sweeps,
        sweeps: prior.sweeps,
        log_rb_mono: rb_mono.ln(),
        log_rb_non: rb_non.ln(),
        mean_included: included_total as f64 / prior.sweeps as f64,
        acceptance_rate: if tries > 0 { accepts as f64 / tries as f64 } else { 1.0 },
        final_state: chain.state,
    })
}

/// Posterior probability of monotonicity under the regression-spline model.
pub fn run_sampler(data: &Dataset, basis: &KnotBasis, prior: &SplinePriorConfig) -> Result<MonotonicityResult> {
    let summary = run_chain(data.x(), data.y(), basis, prior, |_| {})?;
    Ok(summarise(&summary, basis, prior))
}

/// Converts chain tallies into a result.
pub fn summarise(summary: &ChainSummary, basis: &KnotBasis, prior: &SplinePriorConfig) -> MonotonicityResult {
    let prior_p = prior.prior_p_monotone(basis.n_coef());
    let log_bf_rb = log_bayes_factor(summary.log_rb_mono, summary.log_rb_non, prior_p);
    let rb_total = log_add_exp(summary.log_rb_mono, summary.log_rb_non);
    let method = match prior.prior_kind {
        PriorKind::Gaussian => Method::Gauss,
        PriorKind::Mom => Method::Mom,
    };
    let non = summary.sweeps - summary.monotone_sweeps;
    MonotonicityResult::from_log_masses(
        method,
        (summary.monotone_sweeps as f64).ln(),
        (non as f64).ln(),
        prior_p,
        Diagnostics::Gibbs {
            sweeps: summary.sweeps,
            burn_in: prior.burn_in,
            p_monotone_rb: (summary.log_rb_mono - rb_total).exp(),
            log_bayes_factor_rb: log_bf_rb,
            mean_included: summary.mean_included,
            acceptance_rate: summary.acceptance_rate,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_norm_pdf;
    use crate::quadrature::{integrate, integrate_with_breaks};
    use crate::regression_spline::basis::{constraint_matrix, design_matrix, forward_solve};
    use crate::regression_spline::prior::log_prior_gamma;
    use proptest::prelude::*;

    /// `f(x) − α` through `β = L⁻¹ γ` and the truncated-power design.
    fn fit_oracle(basis: &KnotBasis, x: &[f64], iota: &[bool], gamma: &[f64]) -> Vec<f64> {
        let cols = included(iota);
        if cols.is_empty() {
            return vec![0.0; x.len()];
        }
        let (l, _) = constraint_matrix(iota, basis).unwrap();
        let g: Vec<f64> = cols.iter().map(|&j| gamma[j]).collect();
        let beta = forward_solve(&l, &g);
        design_matrix(x, basis)
            .iter()
            .map(|row| cols.iter().zip(&beta).map(|(&j, b)| row[j] * b).sum())
            .collect()
    }

    fn log_joint(data: &Dataset, basis: &KnotBasis, prior: &SplinePriorConfig, s: &SplineState) -> f64 {
        let fit = fit_oracle(basis, data.x(), &s.iota, &s.gamma);
        let rss: f64 = data.y().iter().zip(&fit).map(|(y, f)| (y - s.alpha - f).powi(2)).sum();
        let model: f64 = s
            .iota
            .iter()
            .map(|on| if *on { (1.0 - prior.p_exclude).ln() } else { prior.p_exclude.ln() })
            .sum();
        model + log_prior_gamma(&s.included_gamma(), prior, s.sigma2) - rss / (2.0 * s.sigma2)
    }

    fn toy_data() -> Dataset {
        let x: Vec<f64> = (1..=30).map(|i| i as f64 / 30.0).collect();
        let y = x
            .iter()
            .enumerate()
            .map(|(i, &t)| 0.3 * t + 0.2 * ((i * 7 % 11) as f64 / 11.0 - 0.5))
            .collect();
        Dataset::new(x, y).unwrap()
    }

    proptest! {
        #[test]
        fn node_integration_matches_design(
            iota in proptest::collection::vec(any::<bool>(), 6),
            gamma in proptest::collection::vec(-3.0f64..3.0, 6),
            xs in proptest::collection::btree_set(1u32..1000, 3..40),
        ) {
            let basis = KnotBasis::new(vec![0.15, 0.4, 0.55, 0.9]).unwrap();
            let x: Vec<f64> = xs.iter().map(|&v| v as f64 / 1000.0).collect();
            let gamma: Vec<f64> = gamma.iter().zip(&iota).map(|(g, on)| if *on { *g } else { 0.0 }).collect();
            let ours = fitted_without_intercept(&basis, &x, &iota, &gamma);
            let oracle = fit_oracle(&basis, &x, &iota, &gamma);
            for (a, b) in ours.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    /// Quadrature of the conditional of `(ι_j, γ_j)` relative to exclusion:
    /// log masses of negative and positive inclusion, and the included log density.
    fn conditional_oracle(
        j: usize,
        state: &SplineState,
        data: &Dataset,
        basis: &KnotBasis,
        prior: &SplinePriorConfig,
    ) -> (f64, f64, impl Fn(f64) -> f64) {
        let mut off = state.clone();
        off.iota[j] = false;
        off.gamma[j] = 0.0;
        let offset = log_joint(data, basis, prior, &off);
        let (data, basis, prior, on) = (data.clone(), basis.clone(), prior.clone(), off.clone());
        let density = move |g: f64| {
            let mut s = on.clone();
            s.iota[j] = true;
            s.gamma[j] = g;
            log_joint(&data, &basis, &prior, &s) - offset
        };
        let peak = (-4000..=4000)
            .map(|k| k as f64 / 100.0)
            .max_by(|a, b| density(*a).total_cmp(&density(*b)))
            .unwrap();
        let shift = density(peak);
        let f = |g: f64| (density(g) - shift).exp();
        let mut breaks: Vec<f64> = (-400..=400).map(|k| peak + k as f64 / 200.0).collect();
        breaks.retain(|b| b.abs() < 40.0);
        let mut neg: Vec<f64> = std::iter::once(-60.0).chain(breaks.iter().copied().filter(|b| *b < 0.0)).collect();
        neg.push(0.0);
        let mut pos = vec![0.0];
        pos.extend(breaks.iter().copied().filter(|b| *b > 0.0));
        pos.push(60.0);
        let i_neg = integrate_with_breaks(&f, &neg, 1e-14, 1e-11).value;
        let i_pos = integrate_with_breaks(&f, &pos, 1e-14, 1e-11).value;
        (i_neg.ln() + shift, i_pos.ln() + shift, density)
    }

    fn check_conditional(kind: PriorKind, scale_by_sigma2: bool, others: [f64; 2], j: usize) {
        let data = toy_data();
        let basis = KnotBasis::new(vec![0.5]).unwrap();
        let prior = SplinePriorConfig {
            prior_kind: kind,
            scale_by_sigma2,
            ..if kind == PriorKind::Mom { SplinePriorConfig::mom() } else { SplinePriorConfig::gaussian() }
        };
        let mut state = SplineState {
            iota: vec![true; 3],
            gamma: vec![0.0; 3],
            alpha: 0.05,
            sigma2: 0.02,
        };
        let rest: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        state.gamma[rest[0]] = others[0];
        state.gamma[rest[1]] = others[1];
        state.gamma[j] = 0.7;
        let (lneg, lpos, density) = conditional_oracle(j, &state, &data, &basis, &prior);
        let lincl = log_add_exp(lneg, lpos);

        // Same conditional whether the coefficient starts in or out.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, c_in) = gibbs_update_coefficient(j, state.clone(), &data, &basis, &prior, &mut rng);
        let mut out = state.clone();
        out.iota[j] = false;
        out.gamma[j] = 0.0;
        let (_, c_out) = gibbs_update_coefficient(j, out.clone(), &data, &basis, &prior, &mut rng);
        let (c_in, c_out) = (c_in.unwrap(), c_out.unwrap());
        for c in [c_in, c_out] {
            let odds = c.log_p1 - c.log_p0;
            assert!((odds - lincl).abs() < 1e-6, "log odds {odds} vs {lincl}");
            let split = c.log_pos - c.log_neg;
            assert!((split - (lpos - lneg)).abs() < 1e-6, "split {split} vs {}", lpos - lneg);
        }

        // Draws: inclusion frequency and the distribution of included values.
        let n = 40_000;
        let mut draws = Vec::new();
        let mut s = out;
        for _ in 0..n {
            let (next, _) = gibbs_update_coefficient(j, s, &data, &basis, &prior, &mut rng);
            if next.iota[j] {
                draws.push(next.gamma[j]);
            }
            s = next;
            s.gamma[j] = 0.0;
            s.iota[j] = false;
        }
        let p1 = 1.0 / (1.0 + (-lincl).exp());
        let freq = draws.len() as f64 / n as f64;
        let se = (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!((freq - p1).abs() < 4.5 * se + 1e-9, "inclusion {freq} vs {p1}");
        if draws.len() < 1000 {
            return;
        }
        draws.sort_by(f64::total_cmp);
        let shift = density(draws[draws.len() / 2]);
        let f = |g: f64| (density(g) - shift).exp();
        let norm = integrate(&f, -60.0, 60.0, 1e-14, 1e-11).value;
        let mut worst: f64 = 0.0;
        for q in 1..40 {
            let idx = q * draws.len() / 40;
            let t = draws[idx];
            let cdf = integrate(&f, -60.0, t, 1e-14, 1e-11).value / norm;
            worst = worst.max((cdf - idx as f64 / draws.len() as f64).abs());
        }
        assert!(worst < 1.8 / (draws.len() as f64).sqrt(), "ks {worst} with {} draws", draws.len());
    }

    #[test]
    fn gaussian_conditional_matches_quadrature() {
        check_conditional(PriorKind::Gaussian, false, [0.3, 0.1], 0);
        check_conditional(PriorKind::Gaussian, false, [0.3, -0.2], 2);
        check_conditional(PriorKind::Gaussian, false, [0.3, 0.4], 1);
        check_conditional(PriorKind::Gaussian, true, [0.3, -0.2], 2);
    }

    #[test]
    fn mom_conditional_matches_quadrature() {
        check_conditional(PriorKind::Mom, false, [0.3, 0.1], 0);
        check_conditional(PriorKind::Mom, false, [-0.3, 0.2], 2);
        check_conditional(PriorKind::Mom, false, [0.05, 0.4], 1);
        check_conditional(PriorKind::Mom, true, [0.05, 0.4], 1);
    }

    #[test]
    fn squared_normal_sampler_matches_its_cdf() {
        for z in [-6.0, -3.5, -2.5, 0.0, 1.5, 4.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut tries = (0, 0);
            let mut d: Vec<f64> = (0..20_000).map(|_| sample_squared_normal(z, &mut rng, &mut tries)).collect();
            d.sort_by(f64::total_cmp);
            let norm = log_half_second_moment(z).exp();
            let f = |t: f64| t * t * log_norm_pdf(t - z).exp();
            let mut worst: f64 = 0.0;
            for q in 1..50 {
                let idx = q * d.len() / 50;
                let cdf = integrate(&f, 0.0, d[idx], 1e-15, 1e-12).value / norm;
                worst = worst.max((cdf - idx as f64 / d.len() as f64).abs());
            }
            assert!(worst < 1.8 / (d.len() as f64).sqrt(), "z = {z}: {worst}");
            assert!(tries.1 as f64 / tries.0 as f64 > 0.35, "z = {z}: acceptance {tries:?}");
        }
    }

    #[test]
    fn sigma2_inverse_cdf_matches_quadrature() {
        for (a, b, max) in [(50.0, 0.5, 1e3), (2.0, 3.0, 1.0), (0.5, 1e-3, 10.0), (1.5, 40.0, 2.0)] {
            let log_dens = |s: f64| -(a + 1.0) * s.ln() - b / s;
            let mode = (b / (a + 1.0)).min(max);
            let f = |s: f64| (log_dens(s) - log_dens(mode)).exp();
            let breaks: Vec<f64> = [0.0, mode * 0.25, mode * 0.5, mode, mode * 2.0, mode * 4.0, mode * 16.0, max]
                .into_iter()
                .filter(|v| *v <= max)
                .collect();
            let total = integrate_with_breaks(&f, &breaks, 1e-300, 1e-12).value;
            for u in [0.05, 0.25, 0.5, 0.75, 0.95] {
                let s = sigma2_inverse_cdf(a, b, max, u);
                assert!(s > 0.0 && s <= max);
                let mut br: Vec<f64> = breaks.iter().copied().filter(|v| *v < s).collect();
                br.push(s);
                let cdf = integrate_with_breaks(&f, &br, 1e-300, 1e-12).value / total;
                assert!((cdf - u).abs() < 1e-4, "a={a} b={b}: F({s}) = {cdf}, wanted {u}");
                assert!((sigma2_cdf(a, b, max, s) - u).abs() < 1e-9);
            }
        }
    }

    fn prior_run(kind: PriorKind, sweeps: usize, seed: u64) -> (ChainSummary, Vec<f64>) {
        let x: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let y = vec![0.0; 10];
        let basis = KnotBasis::equally_spaced(3);
        let prior = SplinePriorConfig {
            prior_only: true,
            fixed_sigma2: Some(1.0),
            burn_in: 100,
            sweeps,
            seed,
            ..if kind == PriorKind::Mom { SplinePriorConfig::mom() } else { SplinePriorConfig::gaussian() }
        };
        let mut alphas = Vec::new();
        let s = run_chain(&x, &y, &basis, &prior, |st| alphas.push(st.alpha)).unwrap();
        (s, alphas)
    }

    #[test]
    fn prior_only_chain_recovers_prior_monotone_probability() {
        for kind in [PriorKind::Gaussian, PriorKind::Mom] {
            let (s, _) = prior_run(kind, 200_000, 5);
            let p = s.monotone_sweeps as f64 / s.sweeps as f64;
            let want = SplinePriorConfig::gaussian().prior_p_monotone(5);
            assert!((p - want).abs() < 0.01, "{kind:?}: {p} vs {want}");
            let rb = (s.log_rb_mono - log_add_exp(s.log_rb_mono, s.log_rb_non)).exp();
            assert!((rb - want).abs() < 0.01, "{kind:?} conditional estimate: {rb} vs {want}");
            assert!((s.mean_included - 5.0 * 0.2).abs() < 0.03, "{}", s.mean_included);
        }
    }

    #[test]
    fn prior_only_intercept_has_prior_variance() {
        let (_, a) = prior_run(PriorKind::Gaussian, 40_000, 8);
        let m = a.iter().sum::<f64>() / a.len() as f64;
        let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
        assert!((v / 1e10 - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn everything_excluded_when_exclusion_is_certain() {
        let data = toy_data();
        let prior = SplinePriorConfig {
            p_exclude: 1.0,
            burn_in: 10,
            sweeps: 500,
            ..SplinePriorConfig::gaussian()
        };
        let basis = KnotBasis::equally_spaced(4);
        let s = run_chain(data.x(), data.y(), &basis, &prior, |st| assert_eq!(st.p(), 0)).unwrap();
        assert_eq!(s.monotone_sweeps, s.sweeps);
        assert_eq!(summarise(&s, &basis, &prior).p_monotone, 1.0);
    }

    #[test]
    fn runs_repeat_and_knot_order_is_irrelevant() {
        let data = toy_data();
        let prior = SplinePriorConfig {
            burn_in: 200,
            sweeps: 1000,
            seed: 4,
            ..SplinePriorConfig::mom()
        };
        let a = run_sampler(&data, &KnotBasis::new(vec![0.25, 0.5, 0.75]).unwrap(), &prior).unwrap();
        let b = run_sampler(&data, &KnotBasis::new(vec![0.75, 0.25, 0.5]).unwrap(), &prior).unwrap();
        assert_eq!(a, b);
        let c = run_sampler(&data, &KnotBasis::new(vec![0.25, 0.5, 0.75]).unwrap(), &SplinePriorConfig { seed: 5, ..prior }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn steep_line_is_monotone_and_bump_is_not() {
        let x: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let up = Dataset::new(x.clone(), x.iter().map(|t| t + 1.0 + 0.01 * (t * 37.0).sin()).collect()).unwrap();
        let bump = Dataset::new(x.clone(), x.iter().map(|t| (-50.0 * (t - 0.5f64).powi(2)).exp()).collect()).unwrap();
        for prior in [SplinePriorConfig::gaussian(), SplinePriorConfig::mom()] {
            let prior = SplinePriorConfig { n_knots: 9, burn_in: 500, sweeps: 3000, ..prior };
            assert!(test_p(&up, &prior) > 0.9);
            assert!(test_p(&bump, &prior) < 0.05);
        }
    }

    #[test]
    fn sigma2_concentrates_for_large_n() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| 0.3 * std_normal(&mut rng)).collect();
        let data = Dataset::new(x, y.clone()).unwrap();
        let s2 = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let prior = SplinePriorConfig {
            n_knots: 0,
            fixed_alpha: Some(0.0),
            ..SplinePriorConfig::gaussian()
        };
        let basis = KnotBasis::equally_spaced(0);
        let mut state = SplineState {
            iota: vec![false; 2],
            gamma: vec![0.0; 2],
            alpha: 0.0,
            sigma2: 1.0,
        };
        for _ in 0..200 {
            state = sample_alpha_sigma2(state, &data, &basis, &prior, &mut rng);
            assert!((state.sigma2 / s2 - 1.0).abs() < 0.05, "{} vs {s2}", state.sigma2);
        }
    }

    fn test_p(d: &Dataset, prior: &SplinePriorConfig) -> f64 {
        super::super::test_monotonicity(d, prior).unwrap().p_monotone
    }
}
