//! Least-squares decay-rate estimation on error-vs-horizon checkpoints.

use crate::{CliError, Result};

/// Minimum ratio `max T' / min T'` for a usable curve: 1.5 decades.
const MIN_SPAN: f64 = 31.622776601683793;

/// Fits the exponent of an assumed power law `error ~ (T')^slope`.
///
/// The input is a checkpoint curve of `(T', error)` pairs. Requirements:
/// at least 5 checkpoints spanning at least 1.5 decades of `T'`. The fit
/// itself uses only the tail half of the curve (checkpoints past the
/// geometric midpoint of the `T'` range), excludes non-positive errors,
/// and needs at least 3 usable points; otherwise the curve is rejected.
pub fn rate_slope(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 5 {
        return Err(CliError::config(format!(
            "rate fit needs at least 5 checkpoints, got {}",
            curve.len()
        )));
    }
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for &(t, _) in curve {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::config(format!(
                "rate fit needs positive checkpoint horizons, got {t}"
            )));
        }
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    if t_max < t_min * MIN_SPAN {
        return Err(CliError::config(format!(
            "rate fit needs checkpoints spanning 1.5 decades, got {t_min}..{t_max}"
        )));
    }

    let midpoint = (t_min * t_max).sqrt();
    let tail: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(t, e)| *t >= midpoint && e.is_finite() && *e > 0.0)
        .map(|&(t, e)| (t.ln(), e.ln()))
        .collect();
    if tail.len() < 3 {
        return Err(CliError::config(format!(
            "rate fit needs at least 3 usable tail checkpoints, got {}",
            tail.len()
        )));
    }

    let n = tail.len() as f64;
    let mean_x = tail.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = tail.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &tail {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    Ok(sxy / sxx)
}
