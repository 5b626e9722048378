//! Norm clipping of gradient estimates.
//!
//! `clip(g, level)` rescales `g` to `min(1, level / ||g||) * g`, which keeps
//! the direction and caps the Euclidean norm at `level`. The report carries
//! enough context (input norm, level, whether clipping fired) for callers to
//! build per-iteration statistics without recomputing norms.

use crate::vecmath::{all_finite, l2_norm};
use crate::{Error, Result};

/// Result of one clipping operation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipReport {
    pub clipped_vector: Vec<f64>,
    pub was_clipped: bool,
    pub input_norm: f64,
    pub level: f64,
}

/// Clips `g` to the closed Euclidean ball of radius `level`.
///
/// `was_clipped` is true exactly when `||g|| > level`; in particular the
/// zero vector passes through unclipped. The computed norm of the output
/// never exceeds `level`, including in floating point: rescaled vectors a
/// few ulps over the cap are contracted until the inequality holds.
pub fn clip(g: &[f64], level: f64) -> Result<ClipReport> {
    if !level.is_finite() || level <= 0.0 {
        return Err(Error::input("clipping level must be finite and positive"));
    }
    if g.is_empty() {
        return Err(Error::input("cannot clip an empty vector"));
    }
    if !all_finite(g) {
        return Err(Error::input("cannot clip a non-finite vector"));
    }
    let input_norm = l2_norm(g);
    let was_clipped = input_norm > level;
    let clipped_vector = if was_clipped {
        let factor = level / input_norm;
        let mut scaled: Vec<f64> = g.iter().map(|&v| v * factor).collect();
        // Per-coordinate rounding can leave the rescaled norm a few ulps
        // above the cap. Contract by the remaining ratio (held strictly
        // below 1 so normal coordinates shrink); after a few rounds fall
        // back to exact halving, which terminates even on subnormals.
        let mut out_norm = l2_norm(&scaled);
        let mut rounds = 0;
        while out_norm > level {
            let shrink = if rounds < 8 {
                (level / out_norm).min(1.0 - f64::EPSILON)
            } else {
                0.5
            };
            for v in &mut scaled {
                *v *= shrink;
            }
            out_norm = l2_norm(&scaled);
            rounds += 1;
        }
        scaled
    } else {
        g.to_vec()
    };
    Ok(ClipReport {
        clipped_vector,
        was_clipped,
        input_norm,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_cases() {
        let r = clip(&[3.0, 4.0], 10.0).unwrap();
        assert_eq!(r.clipped_vector, vec![3.0, 4.0]);
        assert!(!r.was_clipped);
        assert_eq!(r.input_norm, 5.0);

        let r = clip(&[3.0, 4.0], 1.0).unwrap();
        assert!(r.was_clipped);
        assert!((r.clipped_vector[0] - 0.6).abs() <= 1e-15);
        assert!((r.clipped_vector[1] - 0.8).abs() <= 1e-15);

        let r = clip(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r.clipped_vector, vec![0.0, 0.0]);
        assert!(!r.was_clipped);
        assert_eq!(r.input_norm, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(clip(&[1.0], 0.0).is_err());
        assert!(clip(&[1.0], -2.0).is_err());
        assert!(clip(&[1.0], f64::INFINITY).is_err());
        assert!(clip(&[f64::NAN], 1.0).is_err());
        assert!(clip(&[f64::NEG_INFINITY, 0.0], 1.0).is_err());
        assert!(clip(&[], 1.0).is_err());
    }

    #[test]
    fn unclipped_vector_is_returned_verbatim() {
        let g = [0.1, -0.2, 0.05];
        let r = clip(&g, 1.0).unwrap();
        assert_eq!(r.clipped_vector.as_slice(), g.as_slice());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn norm_capped_and_flag_consistent(
            g in proptest::collection::vec(-1e6f64..1e6, 1..8),
            level in 1e-6f64..1e3,
        ) {
            let r = clip(&g, level).unwrap();
            let out_norm = l2_norm(&r.clipped_vector);
            prop_assert!(out_norm <= level);
            prop_assert_eq!(r.was_clipped, r.input_norm > level);
            if !r.was_clipped {
                prop_assert_eq!(&r.clipped_vector, &g);
            }
        }

        #[test]
        fn norm_cap_is_exact_near_the_boundary(
            direction in proptest::collection::vec(-1.0f64..1.0, 2..8),
            ulps in 0i32..4,
        ) {
            // Inputs whose norm sits within a few ulps above the level are
            // the cases where naive rescaling overshoots.
            let norm = l2_norm(&direction);
            prop_assume!(norm > 1e-3);
            let mut level = norm;
            for _ in 0..ulps {
                level = f64::from_bits(level.to_bits() - 1);
            }
            let r = clip(&direction, level).unwrap();
            prop_assert!(l2_norm(&r.clipped_vector) <= level);
        }

        #[test]
        fn direction_preserved(
            g in proptest::collection::vec(-1e3f64..1e3, 2..6),
            level in 1e-3f64..1e2,
        ) {
            let r = clip(&g, level).unwrap();
            if r.input_norm > 0.0 {
                let out_norm = l2_norm(&r.clipped_vector);
                if out_norm > 0.0 {
                    // Cosine similarity of input and output is 1.
                    let cos: f64 = g
                        .iter()
                        .zip(&r.clipped_vector)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / (r.input_norm * out_norm);
                    prop_assert!((cos - 1.0).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn monotone_in_level(
            g in proptest::collection::vec(-1e3f64..1e3, 1..6),
            lo in 1e-3f64..1e2,
            bump in 0.0f64..1e2,
        ) {
            let hi = lo + bump;
            let r_lo = clip(&g, lo).unwrap();
            let r_hi = clip(&g, hi).unwrap();
            prop_assert!(l2_norm(&r_lo.clipped_vector) <= l2_norm(&r_hi.clipped_vector) + 1e-12);
        }
    }
}
