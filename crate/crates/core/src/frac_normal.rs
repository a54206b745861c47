//! Fractional normal law: the value at time `s1` of a scaled Wiener process
//! started at `g0 > 0` at time `s0` and conditioned (h-transform) to first hit
//! zero at time `xi`. It is the radial part of a three-dimensional Brownian
//! bridge, so it can be sampled exactly and has a closed-form density.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{std_normal, LN_2};
use crate::quadrature::{integrate_with_breaks, Integral};

/// Parameters of one conditioned increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracNormalParams {
    pub g0: f64,
    pub xi: f64,
    pub tau: f64,
    pub s0: f64,
    pub s1: f64,
    /// Elapsed fraction of the bridge, `(s1 - s0) / (xi - s0)`.
    u: f64,
    h: f64,
    m: f64,
}

impl FracNormalParams {
    pub fn new(g0: f64, xi: f64, tau: f64, s0: f64, s1: f64) -> Result<Self> {
        let all_finite = [g0, xi, tau, s0, s1].iter().all(|v| v.is_finite());
        if !all_finite || g0 <= 0.0 || tau <= 0.0 || s0 < 0.0 || s1 <= s0 || xi <= s1 {
            return Err(Error::Domain(format!(
                "fractional normal needs g0>0, tau>0, 0<=s0<s1<xi; got g0={g0}, xi={xi}, tau={tau}, s0={s0}, s1={s1}"
            )));
        }
        let horizon = xi - s0;
        let u = (s1 - s0) / horizon;
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("degenerate bridge position u={u}")));
        }
        let h = tau * (horizon * u * (1.0 - u)).sqrt();
        let m = g0 * (1.0 - u) / h;
        if !(h > 0.0 && m > 0.0 && h.is_finite() && m.is_finite()) {
            return Err(Error::Domain(format!("degenerate scale h={h}, m={m}")));
        }
        Ok(Self {
            g0,
            xi,
            tau,
            s0,
            s1,
            u,
            h,
            m,
        })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Mean of the first radial coordinate, `h·m = g0·(1-u)`.
    pub fn center(&self) -> f64 {
        self.g0 * (1.0 - self.u)
    }
}

/// `log(sinh(x))` for `x > 0` without overflow.
fn log_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - LN_2
}

/// Natural-log density of `g1` under the fractional normal law.
pub fn log_density(g1: f64, params: &FracNormalParams) -> Result<f64> {
    if !(g1 > 0.0) || !g1.is_finite() {
        return Err(Error::Domain(format!("fractional normal density needs g1 > 0, got {g1}")));
    }
    let (h, m) = (params.h, params.m);
    let t = g1 / h;
    // √2 e^{-m²/2} / (m h² √π) · g1 sinh(m g1 / h) · exp(-g1² / (2h²))
    let log_norm = 0.5 * LN_2 - 0.5 * m * m - m.ln() - 2.0 * h.ln() - 0.5 * std::f64::consts::PI.ln();
    Ok(log_norm + g1.ln() + log_sinh(m * t) - 0.5 * t * t)
}

pub fn density(g1: f64, params: &FracNormalParams) -> f64 {
    if g1 <= 0.0 {
        return 0.0;
    }
    log_density(g1, params).map(f64::exp).unwrap_or(0.0)
}

/// Maps three standard normal draws to a fractional normal variate.
pub fn from_normals(params: &FracNormalParams, z1: f64, z2: f64, z3: f64) -> f64 {
    let h = params.h;
    let first = h * z1 + params.center();
    (first * first + h * h * (z2 * z2 + z3 * z3)).sqrt()
}

/// Exact draw: `h·‖(z1 + m, z2, z3)‖`.
pub fn sample<R: Rng + ?Sized>(params: &FracNormalParams, rng: &mut R) -> f64 {
    let z1 = std_normal(rng);
    let z2 = std_normal(rng);
    let z3 = std_normal(rng);
    from_normals(params, z1, z2, z3)
}

/// Upper end of the quadrature range; the mass beyond it is below
/// `P(χ²₃ > 100) ≈ 2·10⁻²¹`.
pub fn quadrature_upper(params: &FracNormalParams) -> f64 {
    params.g0 + 10.0 * params.h
}

fn breaks(params: &FracNormalParams, upper: f64) -> Vec<f64> {
    let c = params.center();
    let h = params.h;
    let mut b = vec![0.0, (c - 8.0 * h).max(0.0), (c + 8.0 * h).min(upper), upper];
    b.retain(|v| *v <= upper);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// `P(G ≤ x)` by adaptive quadrature of the density.
pub fn cdf_quadrature(x: f64, params: &FracNormalParams) -> Integral {
    if x <= 0.0 {
        return Integral { value: 0.0, error: 0.0 };
    }
    let f = |g: f64| density(g, params);
    integrate_with_breaks(&f, &breaks(params, x), 1e-14, 1e-12)
}

/// Total mass over `(0, g0 + 10h)`.
pub fn total_mass_quadrature(params: &FracNormalParams) -> Integral {
    cdf_quadrature(quadrature_upper(params), params)
}

/// First moment by quadrature.
pub fn mean_quadrature(params: &FracNormalParams) -> Integral {
    let f = |g: f64| g * density(g, params);
    let upper = quadrature_upper(params);
    integrate_with_breaks(&f, &breaks(params, upper), 1e-14, 1e-12)
}
