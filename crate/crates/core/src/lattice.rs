//! The value lattice `V = ℝ^m` with the coordinatewise order.
//!
//! Every S-metric in this crate takes its values here. `ℝ^m` ordered
//! coordinatewise is a vector lattice (sup and inf are coordinatewise max
//! and min) and is Archimedean, so no per-problem Archimedean check exists.
//!
//! Order convergence `μ_n ↓ 0` cannot be decided over infinite sequences;
//! [`decreases_to_zero`] decides it over a finite prefix with a tolerance.

use std::fmt;
use std::ops::{Add, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when a caller does not supply one for `μ_n ↓ 0` checks.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Absolute part of the slack allowed in `⪯` comparisons of computed values.
pub const ABS_SLACK: f64 = 1e-12;

/// Number of units in the last place allowed in `⪯` comparisons.
pub const ULP_SLACK: f64 = 4.0;

/// An element of `ℝ^m`; all coordinates are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatticeElement(Vec<f64>);

impl LatticeElement {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument(
                "lattice element needs at least one coordinate".into(),
            ));
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "lattice dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn splat(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_dim(other)?;
        Self::new(self.0.iter().zip(&other.0).map(|(&a, &b)| op(a, b)).collect())
    }

    /// `self ⪯ other`, exact.
    pub fn leq(&self, other: &Self) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a <= b))
    }

    /// `self ⪯ other` with the floating-point slack of [`approx_le`].
    pub fn leq_with_slack(&self, other: &Self, abs_slack: f64) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .all(|(&a, &b)| approx_le(a, b, abs_slack)))
    }

    pub fn sup(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, f64::max)
    }

    pub fn inf(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, f64::min)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|c| c * factor).collect())
    }

    /// Coordinatewise absolute value `|v|`.
    pub fn abs(&self) -> Self {
        Self(self.0.iter().map(|c| c.abs()).collect())
    }

    /// Largest coordinate (not the largest magnitude).
    pub fn max_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖v‖∞`.
    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Membership in the positive cone `V⁺`.
    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&c| c >= 0.0)
    }
}

impl TryFrom<Vec<f64>> for LatticeElement {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<LatticeElement> for Vec<f64> {
    fn from(value: LatticeElement) -> Self {
        value.0
    }
}

impl Index<usize> for LatticeElement {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl Add for &LatticeElement {
    type Output = LatticeElement;

    /// Panics on dimension mismatch; use [`LatticeElement::try_add`] for a checked sum.
    fn add(self, rhs: Self) -> LatticeElement {
        self.try_add(rhs).expect("lattice addition")
    }
}

impl fmt::Display for LatticeElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0)
    }
}

pub(crate) fn write_tuple(f: &mut fmt::Formatter<'_>, coords: &[f64]) -> fmt::Result {
    f.write_str("(")?;
    for (i, c) in coords.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str(")")
}

/// Distance from `x` to the next representable double of larger magnitude.
pub fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if !x.is_finite() {
        return f64::NAN;
    }
    x.next_up() - x
}

/// `a ≤ b` up to `abs_slack` plus [`ULP_SLACK`] ulps of the larger operand.
pub fn approx_le(a: f64, b: f64, abs_slack: f64) -> bool {
    a <= b + abs_slack + ULP_SLACK * ulp(a.abs().max(b.abs()))
}

/// A non-increasing sequence `μ_n` dominating some residual sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatingSequence {
    pub values: Vec<LatticeElement>,
    pub tolerance: f64,
}

impl DominatingSequence {
    pub fn last(&self) -> Option<&LatticeElement> {
        self.values.last()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values
            .windows(2)
            .all(|w| w[1].leq(&w[0]).unwrap_or(false))
    }

    /// Whether `μ_n ↓ 0` holds on this finite prefix at `self.tolerance`.
    pub fn reaches_zero(&self) -> bool {
        decreases_to_zero(&self.values, self.tolerance).unwrap_or(false)
    }
}

fn check_uniform(seq: &[LatticeElement]) -> Result<usize> {
    let first = seq.first().ok_or(Error::EmptySequence)?;
    let dim = first.dim();
    if let Some(bad) = seq.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(dim)
}

/// True iff `seq` is coordinatewise non-increasing and its last element is `⪯ tol`.
pub fn decreases_to_zero(seq: &[LatticeElement], tol: f64) -> Result<bool> {
    check_uniform(seq)?;
    for w in seq.windows(2) {
        if !w[1].leq(&w[0])? {
            return Ok(false);
        }
    }
    let last = seq.last().expect("non-empty");
    Ok(last.coords().iter().all(|&c| c <= tol))
}

/// `μ_n = sup { seq_k : k ≥ n }`, coordinatewise.
///
/// The result is non-increasing and dominates `seq` pointwise. Its
/// `tolerance` is left at zero; callers that test `μ_n ↓ 0` set it.
pub fn tail_supremum(seq: &[LatticeElement]) -> Result<DominatingSequence> {
    check_uniform(seq)?;
    let mut values = seq.to_vec();
    for i in (0..values.len().saturating_sub(1)).rev() {
        values[i] = values[i].sup(&values[i + 1])?;
    }
    Ok(DominatingSequence {
        values,
        tolerance: 0.0,
    })
}
