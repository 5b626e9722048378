//! Stepsize and clipping-level schedules, communication-instant bookkeeping,
//! the consensus bound, series diagnostics, and the fixed-point resolution of
//! the smoothness-variant scale constant.
//!
//! The schedule family is
//! `alpha_t = (1 + ln t)^(-gamma) * t^(-(kappa - mu)) * min{t^(-mu), 1/c*}`
//! and `lambda_t = max{t^mu, c*}`, where the scale constant `c*` is either
//! twice a uniform gradient bound (bounded-gradient variant) or the
//! smoothness-based constant resolved by [`resolve_smoothness_scale`].

use crate::{Error, Result};

pub const KAPPA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleVariant {
    /// `c* = 2mL(2R1 + 10A) + 2B`, resolved by fixed point.
    Smoothness,
    /// `c* = 2G` for a uniform gradient bound G over the domain.
    BoundedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    /// Tail moment order in (1, 2].
    pub p: f64,
    /// Clipping growth exponent in (0, 1).
    pub mu: f64,
    /// Stepsize decay exponent in (0, 1).
    pub kappa: f64,
    /// Logarithmic damping exponent, > 1.
    pub gamma: f64,
    /// Scale constant `c*` entering both schedules.
    pub scale_constant: f64,
    pub variant: ScheduleVariant,
}

impl ScheduleParams {
    pub fn new(
        p: f64,
        mu: f64,
        kappa: f64,
        gamma: f64,
        scale_constant: f64,
        variant: ScheduleVariant,
    ) -> Result<Self> {
        let params = ScheduleParams {
            p,
            mu,
            kappa,
            gamma,
            scale_constant,
            variant,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters at the rate-optimal exponent pair for tail order `p`.
    pub fn minimax(
        p: f64,
        gamma: f64,
        scale_constant: f64,
        variant: ScheduleVariant,
    ) -> Result<Self> {
        let (kappa, mu) = minimax_pair(p)?;
        ScheduleParams::new(p, mu, kappa, gamma, scale_constant, variant)
    }

    /// Checks every parameter constraint, naming the violated inequality.
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(Error::config(format!("p must lie in (1, 2], got {}", self.p)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::config(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::config(format!(
                "kappa must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::config(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if !self.scale_constant.is_finite() || self.scale_constant <= 0.0 {
            return Err(Error::config(format!(
                "scale_constant must be positive, got {}",
                self.scale_constant
            )));
        }
        let lower_half = self.mu + 0.5;
        if self.kappa < lower_half - KAPPA_SLACK {
            return Err(Error::config(format!(
                "kappa = {} violates kappa >= mu + 1/2 = {lower_half}",
                self.kappa
            )));
        }
        let lower_tail = 1.0 - self.mu * (self.p - 1.0);
        if self.kappa < lower_tail - KAPPA_SLACK {
            return Err(Error::config(format!(
                "kappa = {} violates kappa >= 1 - mu*(p-1) = {lower_tail}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Stepsize at iteration `t >= 1`:
    /// `(1 + ln t)^(-gamma) * t^(-(kappa - mu)) * min{t^(-mu), 1/c*}`.
    ///
    /// Evaluated as the quotient of the prefactor by `lambda(t)`; the forms
    /// agree because `min{t^(-mu), 1/c*} = 1/max{t^mu, c*}`, and dividing by
    /// the same `lambda(t)` the product check multiplies back keeps
    /// `alpha(t) * lambda(t) <= 1` exact in floating point.
    pub fn alpha(&self, t: u64) -> f64 {
        assert!(t >= 1, "iteration index starts at 1");
        let tf = t as f64;
        let prefactor = (1.0 + tf.ln()).powf(-self.gamma) * tf.powf(-(self.kappa - self.mu));
        prefactor / self.lambda(t)
    }

    /// Clipping level at iteration `t >= 1`: `max{t^mu, c*}`.
    pub fn lambda(&self, t: u64) -> f64 {
        assert!(t >= 1, "iteration index starts at 1");
        (t as f64).powf(self.mu).max(self.scale_constant)
    }
}

/// The exponent pair `(kappa, mu) = ((p+1)/(2p), 1/(2p))` that attains the
/// minimax rate; it satisfies both schedule inequalities with equality.
pub fn minimax_pair(p: f64) -> Result<(f64, f64)> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::config(format!("p must lie in (1, 2], got {p}")));
    }
    let mu = 1.0 / (2.0 * p);
    let kappa = mu + 0.5;
    Ok((kappa, mu))
}

/// Communication calendar: sync instants `I = {1 + i*period : i = 1..rounds}`
/// over the horizon `T = 1 + period * rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommClock {
    pub period: u64,
    pub rounds: u64,
}

impl CommClock {
    pub fn new(period: u64, rounds: u64) -> Result<Self> {
        if period == 0 {
            return Err(Error::config("period must be at least 1"));
        }
        if rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        Ok(CommClock { period, rounds })
    }

    /// Final iteration index `T = 1 + period * rounds`.
    pub fn horizon(&self) -> u64 {
        1 + self.period * self.rounds
    }

    /// Whether `t` is a sync instant (an element of I).
    pub fn is_instant(&self, t: u64) -> bool {
        t > 1 && t <= self.horizon() && (t - 1) % self.period == 0
    }

    /// All sync instants in increasing order; the last equals the horizon.
    pub fn instants(&self) -> impl Iterator<Item = u64> + '_ {
        (1..=self.rounds).map(move |i| 1 + i * self.period)
    }

    /// Anchor instant for the consensus bound: 1 for `t <= 1 + period`
    /// (including the first sync instant itself), otherwise the largest sync
    /// instant `<= t`.
    pub fn tau(&self, t: u64) -> Result<u64> {
        if t < 1 || t > self.horizon() {
            return Err(Error::input(format!(
                "tau is defined for 1 <= t <= {}, got {t}",
                self.horizon()
            )));
        }
        Ok(tau_formula(self.period, t))
    }
}

/// The tau recurrence without a horizon check, used by the infinite-series
/// diagnostics where t ranges beyond any single run's horizon.
fn tau_formula(period: u64, t: u64) -> u64 {
    if t <= 1 + period {
        1
    } else {
        1 + period * ((t - 1) / period)
    }
}

/// Theoretical spread bound `2 * sum_{s=tau(t)}^{t-1} alpha_s * lambda_s` on
/// `max_i ||x_{i,t} - xbar_t||`. Zero at `t = 1` and at sync instants, where
/// the states coincide exactly.
pub fn consensus_bound(params: &ScheduleParams, clock: &CommClock, t: u64) -> Result<f64> {
    let anchor = clock.tau(t)?;
    if t == 1 || clock.is_instant(t) {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for s in anchor..t {
        acc += params.alpha(s) * params.lambda(s);
    }
    Ok(2.0 * acc)
}

/// Partial sums up to `horizon` of the six schedule series that control the
/// high-probability analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPartialSums {
    pub horizon: u64,
    /// sum of `alpha_t * alpha_tau^2 * lambda_tau^2`
    pub c0: f64,
    /// sum of `alpha_t * alpha_tau * lambda_t * lambda_tau`
    pub c1: f64,
    /// sum of `alpha_t * lambda_t^(1-p)`
    pub c2: f64,
    /// sum of `alpha_t^2 * lambda_t^(2-2p)`
    pub c3: f64,
    /// sum of `(alpha_t * lambda_t)^2 * lambda_t^(-p)`
    pub c4: f64,
    /// sum of `(alpha_t * lambda_t)^4 * lambda_t^(-p)`
    pub c5: f64,
}

/// Sums the six series for `t = 1..=horizon` with the anchor sequence
/// induced by `period`. Terms are accumulated left to right.
pub fn series_partial_sums(
    params: &ScheduleParams,
    period: u64,
    horizon: u64,
) -> Result<SeriesPartialSums> {
    params.validate()?;
    if period == 0 || horizon == 0 {
        return Err(Error::input("series sums need period >= 1 and horizon >= 1"));
    }
    let p = params.p;
    let mut sums = SeriesPartialSums {
        horizon,
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
        c4: 0.0,
        c5: 0.0,
    };
    for t in 1..=horizon {
        let at = params.alpha(t);
        let lt = params.lambda(t);
        let anchor = tau_formula(period, t);
        let a_tau = params.alpha(anchor);
        let l_tau = params.lambda(anchor);
        let al = at * lt;
        sums.c0 += at * a_tau * a_tau * l_tau * l_tau;
        sums.c1 += at * a_tau * lt * l_tau;
        sums.c2 += at * lt.powf(1.0 - p);
        sums.c3 += at * at * lt.powf(2.0 - 2.0 * p);
        sums.c4 += al * al * lt.powf(-p);
        sums.c5 += al * al * al * al * lt.powf(-p);
    }
    Ok(sums)
}

/// Problem constants feeding the smoothness-variant scale resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessInputs {
    pub clients: usize,
    /// Gradient Lipschitz constant L of every local objective.
    pub smoothness: f64,
    /// Upper bound R1 on `max_i sqrt(2 D(x* || x_{i,1}))`.
    pub initial_radius: f64,
    /// Upper bound B on `max_i ||grad f_i(x_{i,1})||`.
    pub initial_gradient_bound: f64,
    /// Certified noise moment bound sigma.
    pub sigma: f64,
    pub p_moment: f64,
    /// Failure probability delta in (0, 1).
    pub confidence_delta: f64,
}

/// Resolved scale constant for the smoothness variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessScale {
    /// Fixed point of the self-referential constant A.
    pub a: f64,
    /// `2mL(2R1 + 10A) + 2B` at the resolved A.
    pub c_star: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Resolves the self-referential constant of the smoothness-variant
/// schedule: A is a weighted sum of the series C0..C5, which depend on the
/// schedules, which depend on `c* = 2mL(2R1 + 10A) + 2B`, which depends on
/// A. Fixed-point iteration from `A = 8m` with truncated series at
/// `horizon`, stopping at relative change below 1e-6 or 50 iterations.
pub fn resolve_smoothness_scale(
    inputs: &SmoothnessInputs,
    mu: f64,
    kappa: f64,
    gamma: f64,
    period: u64,
    horizon: u64,
) -> Result<SmoothnessScale> {
    if inputs.clients == 0 {
        return Err(Error::config("clients must be at least 1"));
    }
    if !inputs.smoothness.is_finite() || inputs.smoothness <= 0.0 {
        return Err(Error::config(format!(
            "smoothness must be positive, got {}",
            inputs.smoothness
        )));
    }
    for (name, v) in [
        ("initial_radius", inputs.initial_radius),
        ("initial_gradient_bound", inputs.initial_gradient_bound),
        ("sigma", inputs.sigma),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
        }
    }
    if !(inputs.confidence_delta > 0.0 && inputs.confidence_delta < 1.0) {
        return Err(Error::config(format!(
            "confidence_delta must lie in (0, 1), got {}",
            inputs.confidence_delta
        )));
    }
    let m = inputs.clients as f64;
    let l = inputs.smoothness;
    let r1 = inputs.initial_radius;
    let b = inputs.initial_gradient_bound;
    let p = inputs.p_moment;
    let sigma_p = inputs.sigma.powf(p);
    let sigma_2p = inputs.sigma.powf(2.0 * p);
    let log_term = (1.0 / inputs.confidence_delta).ln();
    let pf = period as f64;
    let c_star_of = |a: f64| 2.0 * m * l * (2.0 * r1 + 10.0 * a) + 2.0 * b;

    let mut a = 8.0 * m;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 50 {
        iterations += 1;
        let params = ScheduleParams::new(
            p,
            mu,
            kappa,
            gamma,
            c_star_of(a),
            ScheduleVariant::Smoothness,
        )?;
        let s = series_partial_sums(&params, period, horizon)?;
        let a_new = (log_term
            + m * l * pf * pf * s.c0
            + 2.0 * m * pf * s.c1
            + 4.0 * sigma_p * s.c2
            + 16.0 * m * sigma_2p * s.c3
            + 40.0 * m * sigma_p * (1.0 + 3.0 * m) * s.c4
            + 40.0 * m * m * sigma_p * s.c5
            + 8.0 * m)
            .max(8.0 * m);
        if !a_new.is_finite() {
            return Err(Error::config(
                "scale resolution diverged to a non-finite constant",
            ));
        }
        let rel = (a_new - a).abs() / a_new;
        a = a_new;
        if rel < 1e-6 {
            converged = true;
            break;
        }
    }
    Ok(SmoothnessScale {
        a,
        c_star: c_star_of(a),
        iterations,
        converged,
    })
}
