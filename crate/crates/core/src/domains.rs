//! Feasible sets and their Euclidean projections.
//!
//! Each domain knows how to test membership up to a tolerance and how to
//! project an arbitrary point onto itself in the Euclidean norm. Points that
//! already satisfy the membership test are returned unchanged, so projection
//! is exactly idempotent.

use crate::vecmath::{all_finite, l2_dist};
use crate::{Error, Result};

/// Default membership tolerance used when a domain checks its own output.
pub const PROJECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// All of R^n.
    FullSpace { dimension: usize },
    /// The probability simplex { x : x_j >= 0, sum_j x_j = 1 }.
    ProbabilitySimplex { dimension: usize },
    /// Axis-aligned box { x : lower <= x <= upper } (componentwise).
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Closed Euclidean ball of the given radius around `center`.
    EuclideanBall { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn full_space(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("domain dimension must be at least 1"));
        }
        Ok(Domain::FullSpace { dimension })
    }

    pub fn simplex(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("domain dimension must be at least 1"));
        }
        Ok(Domain::ProbabilitySimplex { dimension })
    }

    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::config(
                "box bounds must be nonempty and of equal length",
            ));
        }
        if !all_finite(&lower) || !all_finite(&upper) {
            return Err(Error::config("box bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::config(
                "box lower bound exceeds upper bound in some coordinate",
            ));
        }
        Ok(Domain::Box { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::config("ball center must be nonempty"));
        }
        if !all_finite(&center) || !radius.is_finite() || radius <= 0.0 {
            return Err(Error::config("ball needs a finite center and radius > 0"));
        }
        Ok(Domain::EuclideanBall { center, radius })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::FullSpace { dimension } | Domain::ProbabilitySimplex { dimension } => {
                *dimension
            }
            Domain::Box { lower, .. } => lower.len(),
            Domain::EuclideanBall { center, .. } => center.len(),
        }
    }

    /// Membership test with absolute tolerance `tol` on every constraint.
    ///
    /// Points of the wrong dimension or with non-finite coordinates are
    /// never members.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dimension() || !all_finite(x) {
            return false;
        }
        match self {
            Domain::FullSpace { .. } => true,
            Domain::ProbabilitySimplex { .. } => {
                let sum: f64 = x.iter().sum();
                x.iter().all(|&v| v >= -tol) && (sum - 1.0).abs() <= tol
            }
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol),
            Domain::EuclideanBall { center, radius } => l2_dist(x, center) <= radius + tol,
        }
    }

    /// Euclidean projection onto the domain.
    ///
    /// Returns `z` unchanged when `contains(z, PROJECTION_TOL)` already
    /// holds, so projecting twice gives the same point.
    pub fn euclidean_project(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: z.len(),
            });
        }
        if !all_finite(z) {
            return Err(Error::input("cannot project a non-finite point"));
        }
        if self.contains(z, PROJECTION_TOL) {
            return Ok(z.to_vec());
        }
        Ok(match self {
            Domain::FullSpace { .. } => z.to_vec(),
            Domain::ProbabilitySimplex { .. } => project_simplex(z),
            Domain::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
            Domain::EuclideanBall { center, radius } => {
                let dist = l2_dist(z, center);
                // contains() returned false, so dist > radius > 0 here.
                let scale = radius / dist;
                z.iter()
                    .zip(center)
                    .map(|(&v, &c)| c + (v - c) * scale)
                    .collect()
            }
        })
    }
}

/// Sort-based simplex projection (O(n log n) threshold search).
///
/// Sorts the coordinates in decreasing order, finds the largest prefix whose
/// running average keeps the shifted coordinates positive, and subtracts the
/// resulting threshold.
fn project_simplex(z: &[f64]) -> Vec<f64> {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    z.iter().map(|&v| (v - theta).max(0.0)).collect()
}
