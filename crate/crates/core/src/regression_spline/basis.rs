//! Quadratic truncated-power spline basis and the constraint map from
//! coefficients to derivative values.
//!
//! Coefficients are indexed `0` (linear term), `1` (quadratic term) and
//! `2 + k` for the term `(x − κ_k)²₊` of knot `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knots strictly inside `(0, 1)`, stored in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotBasis {
    knots: Vec<f64>,
}

impl KnotBasis {
    /// Sorts `knots`; duplicates or knots outside `(0, 1)` are rejected.
    pub fn new(mut knots: Vec<f64>) -> Result<Self> {
        if knots.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return Err(Error::Domain("knots must lie strictly inside (0, 1)".into()));
        }
        knots.sort_by(f64::total_cmp);
        if knots.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("knots must be distinct".into()));
        }
        Ok(Self { knots })
    }

    /// `m` equally spaced knots `j / (m + 1)`.
    pub fn equally_spaced(m: usize) -> Self {
        Self {
            knots: (1..=m).map(|j| j as f64 / (m + 1) as f64).collect(),
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of spline coefficients, `m + 2`.
    pub fn n_coef(&self) -> usize {
        self.knots.len() + 2
    }

    /// Basis function `j` at `x`.
    pub fn column(&self, j: usize, x: f64) -> f64 {
        match j {
            0 => x,
            1 => x * x,
            _ => {
                let d = x - self.knots[j - 2];
                if d > 0.0 {
                    d * d
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative of basis function `j` at `x`.
    pub fn column_derivative(&self, j: usize, x: f64) -> f64 {
        match j {
            0 => 1.0,
            1 => 2.0 * x,
            _ => 2.0 * (x - self.knots[j - 2]).max(0.0),
        }
    }

    /// `f'(x)` for a full-length coefficient vector.
    pub fn derivative(&self, beta: &[f64], x: f64) -> f64 {
        beta.iter().enumerate().map(|(j, b)| b * self.column_derivative(j, x)).sum()
    }
}

impl TryFrom<Vec<f64>> for KnotBasis {
    type Error = Error;

    fn try_from(knots: Vec<f64>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<KnotBasis> for Vec<f64> {
    fn from(b: KnotBasis) -> Vec<f64> {
        b.knots
    }
}

/// Row-major `n × (m + 2)` design matrix.
pub fn design_matrix(x: &[f64], basis: &KnotBasis) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| (0..basis.n_coef()).map(|j| basis.column(j, xi)).collect())
        .collect()
}

/// Indices of included coefficients in column order.
pub fn included(iota: &[bool]) -> Vec<usize> {
    iota.iter().enumerate().filter(|(_, on)| **on).map(|(j, _)| j).collect()
}

/// Points at which the included coefficients' derivative values are read.
///
/// With the quadratic term present these are `0` (if the linear term is
/// included), every included knot, and `1`. Without it `f'` is constant up to
/// the first included knot, so that knot is dropped in favour of the later
/// ones. Point `r` is paired with the `r`-th included coefficient, which makes
/// the constraint matrix lower triangular with a nonzero diagonal.
pub fn evaluation_points(iota: &[bool], basis: &KnotBasis) -> Vec<f64> {
    let knots: Vec<f64> = (0..basis.knots.len())
        .filter(|&k| iota[k + 2])
        .map(|k| basis.knots[k])
        .collect();
    let mut points = Vec::with_capacity(knots.len() + 2);
    if iota[0] {
        points.push(0.0);
    }
    if iota[1] {
        points.extend(&knots);
        points.push(1.0);
    } else if !knots.is_empty() {
        points.extend(&knots[1..]);
        points.push(1.0);
    }
    points
}

/// Square lower-triangular `L_ι` (row-major) and its evaluation points, with
/// `γ = L_ι β_ι` the derivative values at those points.
pub fn constraint_matrix(iota: &[bool], basis: &KnotBasis) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let cols = included(iota);
    if cols.is_empty() {
        return Err(Error::Domain("empty model: no coefficient is included".into()));
    }
    let points = evaluation_points(iota, basis);
    debug_assert_eq!(points.len(), cols.len());
    let l: Vec<Vec<f64>> = points
        .iter()
        .map(|&t| cols.iter().map(|&j| basis.column_derivative(j, t)).collect())
        .collect();
    for (r, row) in l.iter().enumerate() {
        assert!(row[r] != 0.0, "constraint matrix has a zero pivot in row {r}");
        assert!(row[r + 1..].iter().all(|v| *v == 0.0), "constraint matrix is not lower triangular");
    }
    Ok((l, points))
}

/// Solves `L β = γ` by forward substitution.
pub fn forward_solve(l: &[Vec<f64>], gamma: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; gamma.len()];
    for r in 0..gamma.len() {
        let s: f64 = (0..r).map(|c| l[r][c] * beta[c]).sum();
        beta[r] = (gamma[r] - s) / l[r][r];
    }
    beta
}

/// Whether `f'(x) ≥ 0` on `[0, 1]`: `f'` is piecewise linear with kinks at the
/// knots, so checking `0`, every knot and `1` suffices.
pub fn monotone_oracle(_alpha: f64, beta: &[f64], basis: &KnotBasis) -> bool {
    std::iter::once(0.0)
        .chain(basis.knots.iter().copied())
        .chain(std::iter::once(1.0))
        .all(|t| basis.derivative(beta, t) >= 0.0)
}
