//! Normal-distribution helpers shared by the samplers: tail-stable CDFs,
//! Mills ratios, log-sum-exp and exact one-sided truncated normal draws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const LN_2: f64 = std::f64::consts::LN_2;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Mills ratio `R(z) = Φ(-z) / φ(z)`, accurate for large positive `z`.
pub fn mills_ratio(z: f64) -> f64 {
    if z < 5.0 {
        0.5 * erfc(z / std::f64::consts::SQRT_2) / norm_pdf(z)
    } else {
        // R(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...)))), evaluated bottom-up.
        let mut tail = z;
        for k in (1..=80).rev() {
            tail = z + k as f64 / tail;
        }
        1.0 / tail
    }
}

/// `log Φ(x)` without underflow in the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -5.0 {
        norm_cdf(x).ln()
    } else {
        log_norm_pdf(x) + mills_ratio(-x).ln()
    }
}

/// `log K(z)` with `K(z) = ∫_{-z}^{∞} (t + z)² φ(t) dt = (1 + z²) Φ(z) + z φ(z)`,
/// the second moment of `N(z, 1)` restricted to the positive half-line.
pub fn log_half_second_moment(z: f64) -> f64 {
    if z >= 0.0 {
        ((1.0 + z * z) * norm_cdf(z) + z * norm_pdf(z)).ln()
    } else {
        let a = -z;
        let bracket = if a <= 20.0 {
            (1.0 + a * a) * mills_ratio(a) - a
        } else {
            let a2 = a * a;
            let inv = 1.0 / (a * a2);
            inv * (2.0 - 12.0 / a2 + 90.0 / (a2 * a2) - 840.0 / (a2 * a2 * a2)
                + 9450.0 / (a2 * a2 * a2 * a2))
        };
        log_norm_pdf(a) + bracket.ln()
    }
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal conditioned on `z > a` (exact).
pub fn std_normal_above<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a < 0.5 {
        loop {
            let z = std_normal(rng);
            if z > a {
                return z;
            }
        }
    }
    // Exponential proposal with the optimal rate (Robert, 1995).
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - open_unit(rng).ln() / lambda;
        let d = z - lambda;
        if open_unit(rng).ln() <= -0.5 * d * d {
            return z;
        }
    }
}

/// `N(mean, sd²)` restricted to `(lower, ∞)`.
pub fn normal_above<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    mean + sd * std_normal_above(rng, (lower - mean) / sd)
}

/// `N(mean, sd²)` restricted to `(-∞, upper)`.
pub fn normal_below<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, upper: f64) -> f64 {
    mean - sd * std_normal_above(rng, (mean - upper) / sd)
}
