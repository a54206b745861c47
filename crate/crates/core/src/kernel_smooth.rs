//! Local linear regression with a Gaussian kernel, leave-one-out bandwidth
//! selection, and the plug-in noise and roughness estimates that seed the
//! smoothing-spline test's hyperpriors.

use serde::{Deserialize, Serialize};

pub use crate::data::Dataset;
use crate::error::{Error, Result};

const TAU_FLOOR: f64 = 1e-6;

/// Output of [`plug_in_estimates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothFit {
    pub fitted: Vec<f64>,
    pub bandwidth: f64,
    /// Residual variance with a trace-of-smoother degrees-of-freedom correction.
    pub sigma2_hat: f64,
    /// Largest first difference of the fitted curve, floored at 1e-6.
    pub tau_hat: f64,
    /// Largest absolute slope `|Δf̂ / Δx|` of the fitted curve, floored at 1e-6.
    pub slope_scale: f64,
}

/// One row of the smoother matrix: weights `l_j` with `fitted_i = Σ l_j y_j`.
fn smoother_row(x: &[f64], i: usize, bandwidth: f64, row: &mut [f64]) -> Result<()> {
    let xi = x[i];
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (j, &xj) in x.iter().enumerate() {
        let d = xj - xi;
        let w = (-d * d * inv).exp();
        row[j] = w;
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
    }
    let det = s0 * s2 - s1 * s1;
    if !(s2 > 0.0) || !(det > 1e-10 * s0 * s2) {
        return Err(Error::SingularDesign { x: xi, bandwidth });
    }
    for (j, &xj) in x.iter().enumerate() {
        row[j] *= (s2 - s1 * (xj - xi)) / det;
    }
    Ok(())
}

/// Fitted values of the local linear smoother at the design points.
pub fn llr_fit(data: &Dataset, bandwidth: f64) -> Result<Vec<f64>> {
    Ok(llr_fit_with_trace(data, bandwidth)?.0)
}

/// Fitted values together with the diagonal of the smoother matrix.
fn llr_fit_with_trace(data: &Dataset, bandwidth: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (x, y) = (data.x(), data.y());
    let n = x.len();
    let mut row = vec![0.0; n];
    let mut fitted = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    for i in 0..n {
        smoother_row(x, i, bandwidth, &mut row)?;
        fitted.push(row.iter().zip(y).map(|(l, y)| l * y).sum());
        diag.push(row[i]);
    }
    Ok((fitted, diag))
}

/// Leave-one-out residual sum of squares for one bandwidth.
pub fn loocv_score(data: &Dataset, bandwidth: f64) -> Result<f64> {
    let (fitted, diag) = llr_fit_with_trace(data, bandwidth)?;
    let mut score = 0.0;
    for ((f, l), y) in fitted.iter().zip(&diag).zip(data.y()) {
        let denom = 1.0 - l;
        if denom < 1e-10 {
            return Err(Error::SingularDesign { x: f64::NAN, bandwidth });
        }
        let loo = (f - l * y) / denom;
        score += (y - loo) * (y - loo);
    }
    Ok(score)
}

/// Candidate minimising the leave-one-out score; ties go to the smaller bandwidth.
pub fn loocv_bandwidth(data: &Dataset, candidates: &[f64]) -> Result<f64> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &bw in &sorted {
        let Ok(score) = loocv_score(data, bw) else {
            continue;
        };
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((bw, score));
        }
    }
    best.map(|(bw, _)| bw).ok_or(Error::NoUsableBandwidth)
}

/// Twenty log-spaced bandwidths from half the average spacing up to 0.5.
pub fn default_bandwidth_grid(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let spacing = (x[n - 1] - x[0]) / (n - 1) as f64;
    let (lo, hi) = ((0.5 * spacing).ln(), 0.5f64.ln());
    (0..20).map(|k| (lo + (hi - lo) * k as f64 / 19.0).exp()).collect()
}

/// Cross-validated local linear fit with the derived `σ̂²` and `τ̂`.
pub fn plug_in_estimates(data: &Dataset) -> Result<SmoothFit> {
    let bandwidth = loocv_bandwidth(data, &default_bandwidth_grid(data.x()))?;
    let (fitted, diag) = llr_fit_with_trace(data, bandwidth)?;
    let n = data.len() as f64;
    let trace: f64 = diag.iter().sum();
    let rss: f64 = fitted.iter().zip(data.y()).map(|(f, y)| (y - f) * (y - f)).sum();
    let sigma2_hat = (rss / (n - trace).max(1.0)).max(f64::MIN_POSITIVE);
    let tau_hat = fitted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(TAU_FLOOR);
    let slope_scale = fitted
        .windows(2)
        .zip(data.x().windows(2))
        .map(|(f, x)| ((f[1] - f[0]) / (x[1] - x[0])).abs())
        .fold(0.0, f64::max)
        .max(TAU_FLOOR);
    Ok(SmoothFit {
        fitted,
        bandwidth,
        sigma2_hat,
        tau_hat,
        slope_scale,
    })
}
