//! The eleven benchmark regression functions and seeded data generation.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::std_normal;

/// Resolution of the grid used to derive truth labels.
const TRUTH_GRID: usize = 10_000;

/// Identifier of a benchmark function, `1..=11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TestFunctionId(u8);

impl TestFunctionId {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=11).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::Domain(format!("test function id must be in 1..=11, got {id}")))
        }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (1..=11).map(Self)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn eval(self, x: f64) -> f64 {
        let bump = |a: f64| (-50.0 * (x - 0.5) * (x - 0.5)).exp() * a;
        match self.0 {
            1 => {
                let cubic = if x <= 0.5 { 4.0 * (x - 0.5).powi(3) } else { 0.0 };
                cubic + 0.1 * (x - 0.5) - 0.25 * (-250.0 * (x - 0.25) * (x - 0.25)).exp()
            }
            2 => -x / 10.0,
            3 => bump(-0.1),
            4 => 0.1 * (6.0 * std::f64::consts::PI * x).cos(),
            5 => x / 5.0 + Self(3).eval(x),
            6 => x / 5.0 + Self(4).eval(x),
            7 => x + 1.0 - bump(0.25),
            8 => x * x / 2.0,
            9 => 0.0,
            10 => x + 1.0,
            11 => x + 1.0 - bump(0.45),
            _ => unreachable!("validated on construction"),
        }
    }

    /// Whether the function is non-decreasing on `[0, 1]`, judged on a dense grid.
    pub fn is_monotone(self) -> bool {
        let mut prev = self.eval(0.0);
        for i in 1..=TRUTH_GRID {
            let v = self.eval(i as f64 / TRUTH_GRID as f64);
            if v < prev - 1e-12 {
                return false;
            }
            prev = v;
        }
        true
    }
}

impl TryFrom<u8> for TestFunctionId {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Self::new(id)
    }
}

impl From<TestFunctionId> for u8 {
    fn from(id: TestFunctionId) -> u8 {
        id.0
    }
}

impl std::str::FromStr for TestFunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id = s
            .trim()
            .parse()
            .map_err(|_| Error::Domain(format!("`{s}` is not a test function id")))?;
        Self::new(id)
    }
}

impl fmt::Display for TestFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// Equally spaced design `x_i = i/n`, `i = 1..=n`.
pub fn grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// `y_i = f(x_i) + σ ε_i` on the equally spaced design, noise drawn from a
/// ChaCha8 stream seeded by `seed`.
pub fn generate_dataset(id: TestFunctionId, n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise sd must be non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = grid(n);
    let y = x.iter().map(|&xi| id.eval(xi) + sigma * std_normal(&mut rng)).collect();
    Dataset::new(x, y)
}
