//! Heavy-tailed gradient noise and Monte-Carlo diagnostics for the clipped
//! stochastic oracle.
//!
//! Noise is zero mean per coordinate by construction (the Pareto sampler
//! subtracts its closed-form mean) and certifies a p-th moment bound sigma
//! empirically via a seeded estimator. The clipped-oracle diagnostic
//! estimates the bias and centered second moment of the clipped noisy
//! gradient and reports them next to their theoretical envelopes.

use crate::clipping::clip;
use crate::problems::Problem;
use crate::rng::{seeded, stream};
use crate::vecmath::{all_finite, l2_norm};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Exact gradients; the oracle adds nothing at all.
    None,
    Gaussian { std_dev: f64 },
    /// Pareto(beta, x_scale) shifted by its mean `beta * x_scale / (beta - 1)`
    /// so each coordinate is zero mean. For beta = 2 the variance is infinite
    /// while every moment of order p < 2 is finite.
    ShiftedPareto { beta: f64, x_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Moment order p in (1, 2] for which the model certifies E||xi||^p.
    pub p_moment: f64,
    /// Certified moment bound: sigma with E||xi||^p <= sigma^p, estimated
    /// empirically by [`NoiseModel::certify_sigma`].
    pub sigma: Option<f64>,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::config(format!(
            "p_moment must lie in (1, 2], got {p}"
        )));
    }
    Ok(())
}

impl NoiseModel {
    pub fn none(p_moment: f64) -> Result<Self> {
        check_p(p_moment)?;
        Ok(NoiseModel {
            kind: NoiseKind::None,
            p_moment,
            sigma: Some(0.0),
        })
    }

    pub fn gaussian(std_dev: f64, p_moment: f64) -> Result<Self> {
        check_p(p_moment)?;
        if !std_dev.is_finite() || std_dev <= 0.0 {
            return Err(Error::config(format!(
                "gaussian std_dev must be positive, got {std_dev}"
            )));
        }
        Ok(NoiseModel {
            kind: NoiseKind::Gaussian { std_dev },
            p_moment,
            sigma: None,
        })
    }

    pub fn shifted_pareto(beta: f64, x_scale: f64, p_moment: f64) -> Result<Self> {
        check_p(p_moment)?;
        if !beta.is_finite() || beta <= 1.0 {
            return Err(Error::config(format!(
                "pareto beta must exceed 1 so the mean exists, got {beta}"
            )));
        }
        if !x_scale.is_finite() || x_scale <= 0.0 {
            return Err(Error::config(format!(
                "pareto x_scale must be positive, got {x_scale}"
            )));
        }
        Ok(NoiseModel {
            kind: NoiseKind::ShiftedPareto { beta, x_scale },
            p_moment,
            sigma: None,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::config(format!(
                "sigma must be a nonnegative finite real, got {sigma}"
            )));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    /// Mean of the uncentered sampler, subtracted to center the noise.
    pub fn mean_shift(&self) -> f64 {
        match self.kind {
            NoiseKind::ShiftedPareto { beta, x_scale } => beta * x_scale / (beta - 1.0),
            NoiseKind::Gaussian { .. } | NoiseKind::None => 0.0,
        }
    }

    /// One centered noise vector with i.i.d. coordinates.
    pub fn sample<R: Rng>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self.kind {
            NoiseKind::None => vec![0.0; dim],
            NoiseKind::Gaussian { std_dev } => (0..dim)
                .map(|_| std_dev * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            NoiseKind::ShiftedPareto { beta, x_scale } => {
                let shift = self.mean_shift();
                (0..dim)
                    .map(|_| pareto_inverse_cdf(beta, x_scale, rng.random::<f64>()) - shift)
                    .collect()
            }
        }
    }

    /// Empirical p-th moment `(1/N) * sum_k ||xi_k||^p` over `n_samples`
    /// dim-dimensional draws from a seeded stream.
    pub fn moment_diagnostic(&self, p: f64, dim: usize, n_samples: usize, seed: u64) -> Result<f64> {
        check_p(p)?;
        if dim == 0 {
            return Err(Error::input("moment diagnostic needs dimension >= 1"));
        }
        if n_samples < 1000 {
            return Err(Error::input("moment diagnostic needs at least 1000 samples"));
        }
        if matches!(self.kind, NoiseKind::None) {
            return Ok(0.0);
        }
        let mut rng = seeded(seed);
        let mut acc = 0.0;
        for _ in 0..n_samples {
            let xi = self.sample(dim, &mut rng);
            acc += l2_norm(&xi).powf(p);
        }
        Ok(acc / n_samples as f64)
    }

    /// Estimates sigma = (E||xi||^p)^(1/p) at the model's own moment order,
    /// stores it, and returns it.
    pub fn certify_sigma(&mut self, dim: usize, n_samples: usize, seed: u64) -> Result<f64> {
        let moment = self.moment_diagnostic(self.p_moment, dim, n_samples, seed)?;
        let sigma = moment.powf(1.0 / self.p_moment);
        self.sigma = Some(sigma);
        Ok(sigma)
    }

    fn sigma_or_reject(&self) -> Result<f64> {
        match self.sigma {
            Some(s) => Ok(s),
            None => Err(Error::config(
                "noise model has no certified sigma; call certify_sigma or with_sigma first",
            )),
        }
    }
}

/// Inverse CDF of the Pareto(beta, x_scale) distribution at u in [0, 1):
/// `x_scale * (1 - u)^(-1/beta)`.
pub fn pareto_inverse_cdf(beta: f64, x_scale: f64, u: f64) -> f64 {
    x_scale * (1.0 - u).powf(-1.0 / beta)
}

/// A deterministic noisy-gradient oracle: gradient of one agent's objective
/// plus one centered noise draw from the stream keyed by (agent, iteration).
///
/// Each (agent, iteration) cell owns an independent stream derived from the
/// master seed, so calls are reproducible in any order and under any degree
/// of parallelism.
#[derive(Debug, Clone, Copy)]
pub struct StochasticOracle<'a> {
    pub problem: &'a Problem,
    pub noise: &'a NoiseModel,
    pub master_seed: u64,
}

impl<'a> StochasticOracle<'a> {
    pub fn new(problem: &'a Problem, noise: &'a NoiseModel, master_seed: u64) -> Self {
        StochasticOracle {
            problem,
            noise,
            master_seed,
        }
    }

    /// `grad f_agent(x) + xi` with `xi` drawn from the (agent, iteration)
    /// stream. Under `NoiseKind::None` the exact gradient vector is returned
    /// unmodified, so noiseless runs match deterministic baselines bitwise.
    pub fn noisy_gradient(&self, agent: usize, iteration: u64, x: &[f64]) -> Result<Vec<f64>> {
        let grad = self.problem.gradient(agent, x)?;
        if matches!(self.noise.kind, NoiseKind::None) {
            return Ok(grad);
        }
        let mut rng = stream(self.master_seed, agent as u64, iteration);
        let xi = self.noise.sample(grad.len(), &mut rng);
        Ok(grad.iter().zip(&xi).map(|(g, e)| g + e).collect())
    }
}

/// Monte-Carlo estimates of the clipped oracle's bias norm and centered
/// second moment, with their theoretical envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedOracleReport {
    /// `|| E[clip(g + xi, level)] - g ||` estimated over the sample.
    pub bias_norm: f64,
    /// `E || clip(g + xi, level) - E[clip(g + xi, level)] ||^2` estimate.
    pub second_moment: f64,
    /// Envelope `4 sigma^p level^(1-p)` for the bias norm.
    pub bias_bound: f64,
    /// Envelope `40 sigma^p level^(2-p)` for the second moment.
    pub second_moment_bound: f64,
    pub samples: usize,
}

/// Estimates the clipped oracle's bias and fluctuation at a point whose
/// exact gradient is at most half the clipping level (the regime in which
/// the envelopes are claimed; anything larger is rejected).
///
/// Two passes over the same seeded stream: the first accumulates the mean
/// clipped vector, the second, after resetting the stream, accumulates the
/// squared deviation from that mean.
pub fn clipped_oracle_diagnostic(
    problem: &Problem,
    agent: usize,
    x: &[f64],
    noise: &NoiseModel,
    level: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ClippedOracleReport> {
    if !level.is_finite() || level <= 0.0 {
        return Err(Error::input(format!(
            "clipping level must be positive, got {level}"
        )));
    }
    if n_samples < 1000 {
        return Err(Error::input("oracle diagnostic needs at least 1000 samples"));
    }
    if !all_finite(x) {
        return Err(Error::input("diagnostic point must be finite"));
    }
    let grad = problem.gradient(agent, x)?;
    let grad_norm = l2_norm(&grad);
    if grad_norm > level / 2.0 {
        return Err(Error::input(format!(
            "gradient norm {grad_norm} exceeds level/2 = {}; the envelopes are only claimed below it",
            level / 2.0
        )));
    }
    let sigma = noise.sigma_or_reject()?;
    let p = noise.p_moment;
    let dim = grad.len();

    // A noiseless oracle is deterministic: every draw clips to the same
    // vector, so the estimates are exact without summing.
    if matches!(noise.kind, NoiseKind::None) {
        let report = clip(&grad, level)?;
        let bias: Vec<f64> = report
            .clipped_vector
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        return Ok(ClippedOracleReport {
            bias_norm: l2_norm(&bias),
            second_moment: 0.0,
            bias_bound: 4.0 * sigma.powf(p) * level.powf(1.0 - p),
            second_moment_bound: 40.0 * sigma.powf(p) * level.powf(2.0 - p),
            samples: n_samples,
        });
    }

    let mut mean = vec![0.0; dim];
    let mut rng = seeded(seed);
    for _ in 0..n_samples {
        let xi = noise.sample(dim, &mut rng);
        let g: Vec<f64> = grad.iter().zip(&xi).map(|(a, b)| a + b).collect();
        let report = clip(&g, level)?;
        for (m, v) in mean.iter_mut().zip(&report.clipped_vector) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n_samples as f64;
    }

    let mut second = 0.0;
    let mut rng = seeded(seed);
    for _ in 0..n_samples {
        let xi = noise.sample(dim, &mut rng);
        let g: Vec<f64> = grad.iter().zip(&xi).map(|(a, b)| a + b).collect();
        let report = clip(&g, level)?;
        let dev: Vec<f64> = report
            .clipped_vector
            .iter()
            .zip(&mean)
            .map(|(a, b)| a - b)
            .collect();
        let norm = l2_norm(&dev);
        second += norm * norm;
    }
    second /= n_samples as f64;

    let bias: Vec<f64> = mean.iter().zip(&grad).map(|(a, b)| a - b).collect();
    Ok(ClippedOracleReport {
        bias_norm: l2_norm(&bias),
        second_moment: second,
        bias_bound: 4.0 * sigma.powf(p) * level.powf(1.0 - p),
        second_moment_bound: 40.0 * sigma.powf(p) * level.powf(2.0 - p),
        samples: n_samples,
    })
}
