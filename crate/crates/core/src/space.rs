//! Carrier points, box domains and seeded samplers.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the carrier set `ℜ ⊆ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn distance_inf(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    /// `self + step·e_axis`.
    pub fn offset(&self, axis: usize, step: f64) -> Point {
        let mut coords = self.0.clone();
        coords[axis] += step;
        Point(coords)
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Self(coords)
    }
}

impl Index<usize> for Point {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        crate::lattice::write_tuple(f, &self.0)
    }
}

/// Product of closed intervals `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CarrierBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Problem("carrier dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Problem(format!(
                    "carrier interval {i} is not a finite closed interval: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// Membership allowing `slack` outside each face.
    pub fn contains_within(&self, p: &Point, slack: f64) -> bool {
        p.dim() == self.dim()
            && p.0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo - slack <= *x && *x <= hi + slack)
    }

    pub fn clamp(&self, p: &Point) -> Point {
        Point(
            p.0.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
                .collect(),
        )
    }
}

/// A deterministic source of carrier points.
///
/// `draw(n)` must return the same points every time it is called with the
/// same `n`, so that reports are reproducible.
pub trait Sampler: Sync {
    fn draw(&self, n: usize) -> Vec<Point>;

    /// Seed recorded in reports, if the sampler is random.
    fn seed(&self) -> Option<u64> {
        None
    }
}

/// Uniform sampling over a [`CarrierBox`] driven by a seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct BoxSampler {
    carrier: CarrierBox,
    seed: u64,
}

impl BoxSampler {
    pub fn new(carrier: CarrierBox, seed: u64) -> Self {
        Self { carrier, seed }
    }

    pub fn carrier(&self) -> &CarrierBox {
        &self.carrier
    }
}

impl Sampler for BoxSampler {
    fn draw(&self, n: usize) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| {
                Point(
                    self.carrier
                        .lower
                        .iter()
                        .zip(&self.carrier.upper)
                        .map(|(&lo, &hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                        .collect(),
                )
            })
            .collect()
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// A fixed list of points, cycled when more are requested than stored.
#[derive(Debug, Clone)]
pub struct FixedSample(pub Vec<Point>);

impl Sampler for FixedSample {
    fn draw(&self, n: usize) -> Vec<Point> {
        if self.0.is_empty() {
            return Vec::new();
        }
        self.0.iter().cycle().take(n).cloned().collect()
    }
}
