//! The federated optimization engine: every client runs clipped stochastic
//! mirror-descent steps, and at each sync instant the server replaces all
//! client states by their exact average.
//!
//! The engine audits three runtime invariants: client states stay feasible,
//! the spread `max_i ||x_{i,t} - xbar_t||` respects the consensus bound, and
//! each local step moves a client by at most `alpha_t * lambda_t`. Runs are
//! bit-for-bit reproducible for a fixed master seed regardless of the worker
//! count, because every (client, iteration) cell draws from its own derived
//! stream and averaging always sums in client index order.

use crate::clipping::ClipReport;
use crate::domains::{Domain, PROJECTION_TOL};
use crate::geometry::MirrorGeometry;
use crate::noise::{NoiseModel, StochasticOracle};
use crate::problems::Problem;
use crate::schedules::{consensus_bound, CommClock, ScheduleParams};
use crate::vecmath::l2_dist;
use crate::{Error, Result};
use rayon::prelude::*;

/// Tolerance on the consensus and displacement audits; covers floating-point
/// roundoff only, the underlying inequalities are exact.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertionMode {
    /// A violated invariant aborts the run with the offending client and t.
    Strict,
    /// Violations are tallied in [`ViolationStats`] and the run continues.
    Record,
    /// No runtime auditing.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    /// Every client starts at the domain's canonical point: the barycenter
    /// of the simplex, the origin of the full space (and of a box containing
    /// it, otherwise the box midpoint), or the center of the ball.
    Default,
    /// One explicit feasible starting point per client.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct FederationConfig {
    pub clients: usize,
    pub clock: CommClock,
    pub schedule: ScheduleParams,
    pub geometry: MirrorGeometry,
    pub domain: Domain,
    pub problem: Problem,
    pub noise: NoiseModel,
    pub master_seed: u64,
    pub initializer: Initializer,
    pub assertion_mode: AssertionMode,
    /// Keep the full per-client state history (O(T * m * n) memory).
    pub record_trajectory: bool,
    /// Iterations between ergodic checkpoints; the horizon is always
    /// checkpointed.
    pub checkpoint_stride: u64,
    /// Worker threads for the client updates; results are identical for any
    /// value.
    pub workers: usize,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("clients must be at least 1"));
        }
        if self.problem.agents() != self.clients {
            return Err(Error::config(format!(
                "problem has {} agents but the run has {} clients",
                self.problem.agents(),
                self.clients
            )));
        }
        if self.problem.dimension() != self.domain.dimension() {
            return Err(Error::config(format!(
                "problem dimension {} does not match domain dimension {}",
                self.problem.dimension(),
                self.domain.dimension()
            )));
        }
        self.geometry.supports(&self.domain)?;
        self.schedule.validate()?;
        if self.checkpoint_stride == 0 {
            return Err(Error::config("checkpoint_stride must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if let Initializer::Explicit(points) = &self.initializer {
            if points.len() != self.clients {
                return Err(Error::config(format!(
                    "got {} initial points for {} clients",
                    points.len(),
                    self.clients
                )));
            }
            for (i, point) in points.iter().enumerate() {
                if !self.domain.contains(point, PROJECTION_TOL) {
                    return Err(Error::config(format!(
                        "initial point of client {i} is not in the domain"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Starting states `x_{i,1}`, one per client.
    pub fn initial_states(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        match &self.initializer {
            Initializer::Explicit(points) => Ok(points.clone()),
            Initializer::Default => {
                let n = self.domain.dimension();
                let point = match &self.domain {
                    Domain::FullSpace { .. } => vec![0.0; n],
                    Domain::ProbabilitySimplex { .. } => vec![1.0 / n as f64; n],
                    Domain::Box { lower, upper } => {
                        let zero = vec![0.0; n];
                        if self.domain.contains(&zero, PROJECTION_TOL) {
                            zero
                        } else {
                            lower
                                .iter()
                                .zip(upper)
                                .map(|(&l, &u)| 0.5 * (l + u))
                                .collect()
                        }
                    }
                    Domain::EuclideanBall { center, .. } => center.clone(),
                };
                Ok(vec![point; self.clients])
            }
        }
    }
}

/// Aggregate metrics of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: u64,
    /// Average state `xbar_t` over clients.
    pub average: Vec<f64>,
    /// `f(xbar_t) - f*`.
    pub f_gap_average_state: f64,
    /// `(1/m) sum_i f(x_{i,t}) - f*`.
    pub f_gap_avg_clients: f64,
    /// `max_i ||x_{i,t} - xbar_t||`.
    pub consensus_max: f64,
    /// Theoretical bound on `consensus_max` at this iteration.
    pub consensus_bound: f64,
    /// Fraction of clients whose gradient was clipped in the step taken at
    /// this iteration (zero in the final record, which takes no step).
    pub clip_fraction: f64,
    pub alpha: f64,
    pub lambda: f64,
}

/// Full per-client states right after one sync round.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: u64,
    pub states: Vec<Vec<f64>>,
}

/// Running ergodic means `(1/t) sum_{s<=t} x_{i,s}` of every client at one
/// checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicCheckpoint {
    pub t: u64,
    pub client_means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ViolationStats {
    pub consensus: u64,
    pub feasibility: u64,
    pub displacement: u64,
}

impl ViolationStats {
    pub fn total(&self) -> u64 {
        self.consensus + self.feasibility + self.displacement
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationRun {
    /// One record per iteration, t = 1..=horizon.
    pub records: Vec<IterationRecord>,
    /// Ergodic mean over the whole horizon, per client.
    pub ergodic_means: Vec<Vec<f64>>,
    /// States at the final iteration.
    pub final_states: Vec<Vec<f64>>,
    /// Post-averaging states at every sync instant.
    pub sync_snapshots: Vec<StateSnapshot>,
    /// Full state history, `trajectory[t-1][client]`, when requested.
    pub trajectory: Option<Vec<Vec<Vec<f64>>>>,
    pub checkpoints: Vec<ErgodicCheckpoint>,
    pub sync_rounds: u64,
    pub violations: ViolationStats,
}

impl FederationRun {
    /// Time average of one client's trajectory over t = 1..=horizon.
    pub fn ergodic_average(&self, client: usize) -> Result<Vec<f64>> {
        self.ergodic_means
            .get(client)
            .cloned()
            .ok_or_else(|| {
                Error::input(format!(
                    "client index {client} out of range (have {})",
                    self.ergodic_means.len()
                ))
            })
    }
}

/// Average of client states, summed in client index order so the result is
/// independent of scheduling. Identical states short-circuit to an exact
/// copy, which keeps post-sync averages bitwise equal to the shared state.
pub fn average_states(states: &[Vec<f64>]) -> Vec<f64> {
    assert!(!states.is_empty(), "need at least one state");
    let first = &states[0];
    if states[1..].iter().all(|s| s == first) {
        return first.clone();
    }
    let mut avg = vec![0.0; first.len()];
    for state in states {
        for (a, v) in avg.iter_mut().zip(state) {
            *a += v;
        }
    }
    let m = states.len() as f64;
    for a in avg.iter_mut() {
        *a /= m;
    }
    avg
}

/// One client's update at iteration `t`: draw the noisy gradient, clip it at
/// `lambda_t`, and take the mirror step with stepsize `alpha_t`.
pub fn local_step(
    state: &[f64],
    oracle: &StochasticOracle,
    schedule: &ScheduleParams,
    geometry: &MirrorGeometry,
    domain: &Domain,
    agent: usize,
    t: u64,
) -> Result<(Vec<f64>, ClipReport)> {
    let gradient = oracle.noisy_gradient(agent, t, state)?;
    let report = crate::clipping::clip(&gradient, schedule.lambda(t))?;
    let next = geometry.mirror_step(domain, state, &report.clipped_vector, schedule.alpha(t))?;
    Ok((next, report))
}

/// Executes the full federated loop and returns the recorded run.
///
/// `f_star` is the optimal objective value the gap metrics are measured
/// against; it comes from the problem solver, the engine never derives it.
pub fn run(config: &FederationConfig, f_star: f64) -> Result<FederationRun> {
    config.validate()?;
    let m = config.clients;
    let dim = config.problem.dimension();
    let horizon = config.clock.horizon();
    let mut states = config.initial_states()?;
    let oracle = StochasticOracle::new(&config.problem, &config.noise, config.master_seed);
    let pool = if config.workers >= 2 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?,
        )
    } else {
        None
    };

    // The consensus bound telescopes from the last sync; before the first
    // sync it anchors at t = 1, where clients coincide only under a shared
    // initializer. Unequal explicit starts widen the audit by their spread.
    let initial_average = average_states(&states);
    let initial_spread = states
        .iter()
        .map(|s| l2_dist(s, &initial_average))
        .fold(0.0, f64::max);

    let mut records: Vec<IterationRecord> = Vec::with_capacity(horizon as usize);
    let mut ergodic_sums = vec![vec![0.0; dim]; m];
    let mut checkpoints = Vec::new();
    let mut sync_snapshots = Vec::new();
    let mut trajectory: Option<Vec<Vec<Vec<f64>>>> =
        if config.record_trajectory { Some(Vec::new()) } else { None };
    let mut violations = ViolationStats::default();
    let mut sync_rounds = 0u64;

    for t in 1..=horizon {
        let average = average_states(&states);
        let mut consensus_max = 0.0f64;
        let mut worst_client = 0usize;
        for (i, state) in states.iter().enumerate() {
            let dev = l2_dist(state, &average);
            if dev > consensus_max {
                consensus_max = dev;
                worst_client = i;
            }
        }
        let bound = consensus_bound(&config.schedule, &config.clock, t)?;

        if config.assertion_mode != AssertionMode::Off {
            for (i, state) in states.iter().enumerate() {
                if !config.domain.contains(state, AUDIT_TOL) {
                    if config.assertion_mode == AssertionMode::Strict {
                        return Err(Error::AssertionFailed {
                            client: i,
                            t,
                            detail: "state left the decision domain".into(),
                        });
                    }
                    violations.feasibility += 1;
                }
            }
            let allowance = if config.clock.tau(t)? == 1 {
                initial_spread
            } else {
                0.0
            };
            if consensus_max > bound + allowance + AUDIT_TOL {
                if config.assertion_mode == AssertionMode::Strict {
                    return Err(Error::AssertionFailed {
                        client: worst_client,
                        t,
                        detail: format!(
                            "consensus spread {consensus_max:e} exceeds bound {bound:e}"
                        ),
                    });
                }
                violations.consensus += 1;
            }
        }

        let mut f_clients_acc = 0.0;
        for state in &states {
            f_clients_acc += config.problem.objective(state)?;
        }
        records.push(IterationRecord {
            t,
            average: average.clone(),
            f_gap_average_state: config.problem.objective(&average)? - f_star,
            f_gap_avg_clients: f_clients_acc / m as f64 - f_star,
            consensus_max,
            consensus_bound: bound,
            clip_fraction: 0.0,
            alpha: config.schedule.alpha(t),
            lambda: config.schedule.lambda(t),
        });

        for (sum, state) in ergodic_sums.iter_mut().zip(&states) {
            for (a, v) in sum.iter_mut().zip(state) {
                *a += v;
            }
        }
        if t % config.checkpoint_stride == 0 || t == horizon {
            let client_means = ergodic_sums
                .iter()
                .map(|sum| sum.iter().map(|v| v / t as f64).collect())
                .collect();
            checkpoints.push(ErgodicCheckpoint { t, client_means });
        }
        if let Some(history) = trajectory.as_mut() {
            history.push(states.clone());
        }

        if t == horizon {
            break;
        }

        let step = |i: usize| -> Result<(Vec<f64>, ClipReport)> {
            local_step(
                &states[i],
                &oracle,
                &config.schedule,
                &config.geometry,
                &config.domain,
                i,
                t,
            )
        };
        let results: Vec<Result<(Vec<f64>, ClipReport)>> = match &pool {
            Some(pool) => pool.install(|| (0..m).into_par_iter().map(step).collect()),
            None => (0..m).map(step).collect(),
        };
        let mut next_states = Vec::with_capacity(m);
        let mut clipped = 0usize;
        for (i, result) in results.into_iter().enumerate() {
            let (next, report) = result?;
            if report.was_clipped {
                clipped += 1;
            }
            if config.assertion_mode != AssertionMode::Off {
                let moved = l2_dist(&next, &states[i]);
                let cap = config.schedule.alpha(t) * config.schedule.lambda(t) + AUDIT_TOL;
                if moved > cap {
                    if config.assertion_mode == AssertionMode::Strict {
                        return Err(Error::AssertionFailed {
                            client: i,
                            t,
                            detail: format!("step displacement {moved:e} exceeds {cap:e}"),
                        });
                    }
                    violations.displacement += 1;
                }
            }
            next_states.push(next);
        }
        records
            .last_mut()
            .expect("record pushed above")
            .clip_fraction = clipped as f64 / m as f64;
        states = next_states;

        if config.clock.is_instant(t + 1) {
            let synced = average_states(&states);
            states = vec![synced; m];
            sync_rounds += 1;
            sync_snapshots.push(StateSnapshot {
                t: t + 1,
                states: states.clone(),
            });
        }
    }

    let ergodic_means = ergodic_sums
        .into_iter()
        .map(|sum| sum.into_iter().map(|v| v / horizon as f64).collect())
        .collect();
    Ok(FederationRun {
        records,
        ergodic_means,
        final_states: states,
        sync_snapshots,
        trajectory,
        checkpoints,
        sync_rounds,
        violations,
    })
}
