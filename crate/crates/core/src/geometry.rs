//! Mirror maps: potentials, Bregman divergences, and the mirror-descent step.
//!
//! Two geometries are supported. The Euclidean potential `0.5*||x||^2` turns
//! the mirror step into a projected gradient step and pairs with every
//! domain. The negative-entropy potential `sum_j x_j ln x_j` pairs with the
//! probability simplex only, where the mirror step has the closed-form
//! exponentiated-weights update. Both potentials are 1-strongly convex with
//! respect to the Euclidean norm on their paired domains, which is what the
//! engine's step-displacement bound relies on.

use crate::domains::Domain;
use crate::vecmath::{all_finite, dot};
use crate::{Error, Result};

/// Components are clamped to this floor before any logarithm is taken.
///
/// The exponentiated update drives coordinates toward zero but never reaches
/// it from a positive start; the clamp only guards floating-point underflow.
pub const ENTROPY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorKind {
    Euclidean,
    NegativeEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MirrorGeometry {
    pub kind: MirrorKind,
    pub dimension: usize,
}

impl MirrorGeometry {
    pub fn euclidean(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("geometry dimension must be at least 1"));
        }
        Ok(MirrorGeometry {
            kind: MirrorKind::Euclidean,
            dimension,
        })
    }

    pub fn negative_entropy(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("geometry dimension must be at least 1"));
        }
        Ok(MirrorGeometry {
            kind: MirrorKind::NegativeEntropy,
            dimension,
        })
    }

    /// Checks that this geometry can run a mirror step on `domain`.
    ///
    /// The negative-entropy map only has a usable update on the probability
    /// simplex; every other pairing is rejected here, at configuration time.
    pub fn supports(&self, domain: &Domain) -> Result<()> {
        if domain.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: domain.dimension(),
            });
        }
        match (self.kind, domain) {
            (MirrorKind::Euclidean, _) => Ok(()),
            (MirrorKind::NegativeEntropy, Domain::ProbabilitySimplex { .. }) => Ok(()),
            (MirrorKind::NegativeEntropy, other) => Err(Error::config(format!(
                "negative-entropy geometry requires the probability simplex, got {other:?}"
            ))),
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Potential value at `x`.
    ///
    /// The entropy potential uses the convention `0 * ln 0 = 0`, so it is
    /// defined on the whole nonnegative orthant; negative components are
    /// rejected.
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !all_finite(x) {
            return Err(Error::input("potential needs finite coordinates"));
        }
        match self.kind {
            MirrorKind::Euclidean => Ok(0.5 * dot(x, x)),
            MirrorKind::NegativeEntropy => {
                let mut acc = 0.0;
                for &v in x {
                    if v < 0.0 {
                        return Err(Error::input(
                            "entropy potential is undefined for negative components",
                        ));
                    }
                    if v > 0.0 {
                        acc += v * v.ln();
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Gradient of the potential at `x`.
    ///
    /// Entropy components are clamped to [`ENTROPY_FLOOR`] before the
    /// logarithm; exact zeros therefore yield a large negative but finite
    /// gradient entry.
    pub fn potential_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if !all_finite(x) {
            return Err(Error::input("potential gradient needs finite coordinates"));
        }
        match self.kind {
            MirrorKind::Euclidean => Ok(x.to_vec()),
            MirrorKind::NegativeEntropy => {
                if x.iter().any(|&v| v < 0.0) {
                    return Err(Error::input(
                        "entropy gradient is undefined for negative components",
                    ));
                }
                Ok(x.iter().map(|&v| 1.0 + v.max(ENTROPY_FLOOR).ln()).collect())
            }
        }
    }

    /// Bregman divergence D(x, y) = potential(x) - potential(y)
    /// - <grad potential(y), x - y>.
    ///
    /// Under negative entropy this evaluates the algebraically equivalent
    /// form `sum_j x_j ln(x_j / y_j) - sum x + sum y`, which avoids the
    /// cancellation of the three-term definition; `y` must be strictly
    /// positive, `x` may touch the boundary.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        if !all_finite(x) || !all_finite(y) {
            return Err(Error::input("bregman divergence needs finite coordinates"));
        }
        match self.kind {
            MirrorKind::Euclidean => {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    acc += d * d;
                }
                Ok(0.5 * acc)
            }
            MirrorKind::NegativeEntropy => {
                let mut acc = 0.0;
                let mut sum_x = 0.0;
                let mut sum_y = 0.0;
                for (&a, &b) in x.iter().zip(y) {
                    if b <= 0.0 {
                        return Err(Error::input(
                            "entropy divergence is undefined when the second argument has a zero or negative component",
                        ));
                    }
                    if a < 0.0 {
                        return Err(Error::input(
                            "entropy divergence is undefined for negative components",
                        ));
                    }
                    if a > 0.0 {
                        acc += a * (a / b).ln();
                    }
                    sum_x += a;
                    sum_y += b;
                }
                Ok(acc - sum_x + sum_y)
            }
        }
    }

    /// Absolute residual of the three-point identity
    /// `<grad(x) - grad(y), y - z> = D(z, x) - D(z, y) - D(y, x)`.
    ///
    /// Exact in real arithmetic for any Bregman divergence; this returns the
    /// floating-point defect so callers can assert it is numerically zero.
    pub fn three_point_residual(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        if self.kind == MirrorKind::NegativeEntropy {
            for v in [x, y, z] {
                self.check_dim(v)?;
                if v.iter().any(|&c| c <= 0.0) {
                    return Err(Error::input(
                        "three-point residual under entropy needs strictly positive points",
                    ));
                }
            }
        }
        let gx = self.potential_gradient(x)?;
        let gy = self.potential_gradient(y)?;
        let diff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dir: Vec<f64> = y.iter().zip(z).map(|(a, b)| a - b).collect();
        let lhs = dot(&diff, &dir);
        let rhs = self.bregman(z, x)? - self.bregman(z, y)? - self.bregman(y, x)?;
        Ok((lhs - rhs).abs())
    }

    /// One mirror-descent step from `x` with gradient `g` and stepsize
    /// `alpha`: the minimizer over the domain of
    /// `<g, u> + (1/alpha) * D(u, x)`.
    ///
    /// Euclidean geometry projects `x - alpha * g` onto the domain; negative
    /// entropy reweights `x_j * exp(-alpha * g_j)` and renormalizes (computed
    /// in log space so extreme gradients cannot overflow).
    pub fn mirror_step(
        &self,
        domain: &Domain,
        x: &[f64],
        g: &[f64],
        alpha: f64,
    ) -> Result<Vec<f64>> {
        self.supports(domain)?;
        self.check_dim(x)?;
        self.check_dim(g)?;
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::input("stepsize must be finite and positive"));
        }
        if !all_finite(g) {
            return Err(Error::input("gradient must be finite"));
        }
        if !domain.contains(x, crate::domains::PROJECTION_TOL) {
            return Err(Error::input("mirror step requires a feasible base point"));
        }
        match self.kind {
            MirrorKind::Euclidean => {
                let target: Vec<f64> = x.iter().zip(g).map(|(&xj, &gj)| xj - alpha * gj).collect();
                domain.euclidean_project(&target)
            }
            MirrorKind::NegativeEntropy => {
                let logits: Vec<f64> = x
                    .iter()
                    .zip(g)
                    .map(|(&xj, &gj)| xj.max(ENTROPY_FLOOR).ln() - alpha * gj)
                    .collect();
                let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
                let total: f64 = weights.iter().sum();
                Ok(weights
                    .iter()
                    .map(|&w| (w / total).max(ENTROPY_FLOOR))
                    .collect())
            }
        }
    }
}
