//! Acceptance gate for the simulator. Each test checks one contract the
//! library and CLI promise, at the stated tolerance, and prints exactly one
//! `acceptance: <name> ... PASS` line when it holds. Run with
//! `cargo test -p fedsmd-cli --test acceptance -- --nocapture` to see the
//! lines; a failed assertion in any test marks that contract broken.

use std::time::Instant;

use fedsmd::clipping::clip;
use fedsmd::domains::Domain;
use fedsmd::federation::{self, AssertionMode, FederationConfig, Initializer};
use fedsmd::geometry::MirrorGeometry;
use fedsmd::noise::{clipped_oracle_diagnostic, NoiseModel};
use fedsmd::problems::Problem;
use fedsmd::rng::{derive_seed, seeded};
use fedsmd::schedules::{
    minimax_pair, series_partial_sums, CommClock, ScheduleParams, ScheduleVariant,
};
use fedsmd_cli::config::parse_config;
use fedsmd_cli::experiment::run_experiment;
use rand::Rng;

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Strictly positive point on the probability simplex.
fn simplex_interior<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim)
        .map(|_| 0.05 - (1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Uniform point in `[-3, 3]^3`.
fn cube3<R: Rng>(rng: &mut R) -> Vec<f64> {
    (0..3).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect()
}

/// Uniform point strictly inside the unit box `[-1, 1]^3`.
fn box3<R: Rng>(rng: &mut R) -> Vec<f64> {
    (0..3)
        .map(|_| 0.999 * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Uniform point in the ball of radius `radius * shrink` around `center`,
/// drawn by rejection from the enclosing cube.
fn ball_interior<R: Rng>(rng: &mut R, center: &[f64], radius: f64, shrink: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..center.len())
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        if l2(&u) <= 1.0 {
            return center
                .iter()
                .zip(&u)
                .map(|(c, ui)| c + radius * shrink * ui)
                .collect();
        }
    }
}

/// Every iteration of every mixed configuration satisfies the consensus
/// bound within 1e-9, and consensus is exactly zero at the start and at
/// every communication instant.
#[test]
fn consensus_bound_audit() {
    let started = Instant::now();
    for i in 0..20u64 {
        let clients = (i as usize % 8) + 1;
        let (period, rounds) = [(1u64, 5000u64), (2, 2500), (5, 1000)][i as usize % 3];
        let (geometry, domain, center) = match i % 4 {
            0 => (
                MirrorGeometry::negative_entropy(3).unwrap(),
                Domain::simplex(3).unwrap(),
                vec![0.5, 0.3, 0.2],
            ),
            1 => (
                MirrorGeometry::euclidean(3).unwrap(),
                Domain::simplex(3).unwrap(),
                vec![0.2, 0.5, 0.3],
            ),
            2 => (
                MirrorGeometry::euclidean(3).unwrap(),
                Domain::new_box(vec![-1.0; 3], vec![1.0; 3]).unwrap(),
                vec![0.2, -0.4, 0.6],
            ),
            _ => (
                MirrorGeometry::euclidean(2).unwrap(),
                Domain::ball(vec![0.0, 0.0], 1.5).unwrap(),
                vec![0.3, -0.5],
            ),
        };
        let problem = Problem::quadratic(center, 1.0, clients).unwrap();
        let noise = if i % 2 == 0 {
            NoiseModel::shifted_pareto(2.0, 0.5, 1.8).unwrap()
        } else {
            NoiseModel::gaussian(0.7, 2.0).unwrap()
        };
        let gradient_bound = problem.gradient_bound(&domain).unwrap();
        let schedule = ScheduleParams::minimax(
            noise.p_moment,
            1.01,
            2.0 * gradient_bound,
            ScheduleVariant::BoundedGradient,
        )
        .unwrap();
        let config = FederationConfig {
            clients,
            clock: CommClock::new(period, rounds).unwrap(),
            schedule,
            geometry,
            domain,
            problem,
            noise,
            master_seed: 7000 + i,
            initializer: Initializer::Default,
            assertion_mode: AssertionMode::Strict,
            record_trajectory: false,
            checkpoint_stride: period * rounds + 1,
            workers: 1,
        };
        let run = federation::run(&config, 0.0).unwrap();
        assert_eq!(run.violations.total(), 0);
        assert_eq!(run.records.len() as u64, 1 + period * rounds);
        for record in &run.records {
            assert!(
                record.consensus_max <= record.consensus_bound + 1e-9,
                "config {i}: consensus {} exceeds bound {} at t = {}",
                record.consensus_max,
                record.consensus_bound,
                record.t
            );
            let at_instant = record.t == 1 || (record.t > period && (record.t - 1) % period == 0);
            if at_instant {
                assert_eq!(record.consensus_max, 0.0, "config {i} at t = {}", record.t);
                assert_eq!(record.consensus_bound, 0.0, "config {i} at t = {}", record.t);
            }
        }
    }
    assert!(started.elapsed().as_secs() < 60, "audit budget exceeded");
    println!("acceptance: consensus_bound_audit ... PASS");
}

/// Clipping caps the output norm at the level exactly (no tolerance),
/// preserves direction, reports `was_clipped` iff the input norm exceeds
/// the level, and passes short vectors through verbatim.
#[test]
fn clipping_contract_fuzz() {
    let mut rng = seeded(0xC11F);
    for case in 0..100_000u64 {
        let dim = (case % 8) as usize + 1;
        let magnitude = 10f64.powf(rng.random::<f64>() * 12.0 - 6.0);
        let g: Vec<f64> = (0..dim)
            .map(|_| {
                if rng.random::<f64>() < 0.04 {
                    0.0
                } else {
                    (rng.random::<f64>() - 0.5) * magnitude
                }
            })
            .collect();
        let level = 10f64.powf(rng.random::<f64>() * 6.0 - 3.0);
        let report = clip(&g, level).unwrap();
        let input_norm = l2(&g);
        let output_norm = l2(&report.clipped_vector);
        assert!(output_norm <= level, "norm {output_norm} over level {level}");
        assert_eq!(report.was_clipped, input_norm > level);
        if report.was_clipped {
            for (out, inp) in report.clipped_vector.iter().zip(&g) {
                assert!(out * inp >= 0.0, "sign flipped under clipping");
            }
            if output_norm > 0.0 {
                let cosine = dot(&report.clipped_vector, &g) / (output_norm * input_norm);
                assert!(cosine >= 1.0 - 1e-9, "direction drifted: cos = {cosine}");
            }
        } else {
            for (out, inp) in report.clipped_vector.iter().zip(&g) {
                assert_eq!(out.to_bits(), inp.to_bits(), "short vector altered");
            }
        }
    }
    // Levels a few ulps below the input norm: the regime where a single
    // rescale can overshoot the cap by rounding.
    for case in 0..5_000u64 {
        let dim = (case % 6) as usize + 1;
        let g: Vec<f64> = (0..dim)
            .map(|_| (rng.random::<f64>() - 0.5) * 4.0)
            .collect();
        let norm = l2(&g);
        if norm == 0.0 {
            continue;
        }
        let level = f64::from_bits(norm.to_bits() - (case % 5));
        if level <= 0.0 {
            continue;
        }
        let report = clip(&g, level).unwrap();
        assert!(l2(&report.clipped_vector) <= level);
    }
    // The zero vector is never clipped, at any dimension.
    for dim in 1..=8 {
        let report = clip(&vec![0.0; dim], 0.5).unwrap();
        assert!(!report.was_clipped);
        assert_eq!(report.clipped_vector, vec![0.0; dim]);
    }
    println!("acceptance: clipping_contract_fuzz ... PASS");
}

/// The divergence identities behind the convergence analysis hold for both
/// mirror maps: the three-point identity to 1e-9, strong convexity with
/// respect to the Euclidean norm, convexity in the second argument, and the
/// first-order optimality of the mirror step on every domain.
#[test]
fn geometry_identities() {
    // Negative-entropy map on the simplex.
    let entropy = MirrorGeometry::negative_entropy(3).unwrap();
    let simplex = Domain::simplex(3).unwrap();
    let mut rng = seeded(0x9e01);
    for _ in 0..1000 {
        let x = simplex_interior(&mut rng, 3);
        let y = simplex_interior(&mut rng, 3);
        let z = simplex_interior(&mut rng, 3);
        let residual = entropy.three_point_residual(&x, &y, &z).unwrap();
        assert!(residual <= 1e-9, "three-point residual {residual}");
    }
    for case in 0..1000 {
        let mut x = simplex_interior(&mut rng, 3);
        if case % 5 == 0 {
            // First argument may touch the boundary of the simplex.
            x[case % 3] = 0.0;
            let total: f64 = x.iter().sum();
            for v in &mut x {
                *v /= total;
            }
        }
        let y = simplex_interior(&mut rng, 3);
        let divergence = entropy.bregman(&x, &y).unwrap();
        let distance = l2_dist(&x, &y);
        assert!(divergence >= 0.5 * distance * distance - 1e-10);
    }
    for _ in 0..1000 {
        let x = simplex_interior(&mut rng, 3);
        let candidates: Vec<Vec<f64>> = (0..3).map(|_| simplex_interior(&mut rng, 3)).collect();
        let weights = simplex_interior(&mut rng, 3);
        let mixed: Vec<f64> = (0..3)
            .map(|j| (0..3).map(|k| weights[k] * candidates[k][j]).sum())
            .collect();
        let lhs = entropy.bregman(&x, &mixed).unwrap();
        let rhs: f64 = (0..3)
            .map(|k| weights[k] * entropy.bregman(&x, &candidates[k]).unwrap())
            .sum();
        assert!(lhs <= rhs + 1e-10, "second-argument convexity: {lhs} > {rhs}");
    }
    for _ in 0..1000 {
        let x = simplex_interior(&mut rng, 3);
        let g: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let alpha = 0.01 + 1.5 * rng.random::<f64>();
        let step = entropy.mirror_step(&simplex, &x, &g, alpha).unwrap();
        let z = simplex_interior(&mut rng, 3);
        let grad_step = entropy.potential_gradient(&step).unwrap();
        let grad_x = entropy.potential_gradient(&x).unwrap();
        let optimality: f64 = (0..3)
            .map(|j| (alpha * g[j] + grad_step[j] - grad_x[j]) * (z[j] - step[j]))
            .sum();
        assert!(optimality >= -1e-8, "entropy step optimality {optimality}");
    }

    // Euclidean map across its supported domains.
    let euclid = MirrorGeometry::euclidean(3).unwrap();
    let mut rng = seeded(0x9e02);
    for _ in 0..1000 {
        let x = cube3(&mut rng);
        let y = cube3(&mut rng);
        let z = cube3(&mut rng);
        let residual = euclid.three_point_residual(&x, &y, &z).unwrap();
        assert!(residual <= 1e-9, "three-point residual {residual}");
    }
    for _ in 0..1000 {
        let x = cube3(&mut rng);
        let y = cube3(&mut rng);
        let divergence = euclid.bregman(&x, &y).unwrap();
        let distance = l2_dist(&x, &y);
        assert!(divergence >= 0.5 * distance * distance - 1e-10);
    }
    for _ in 0..1000 {
        let x = cube3(&mut rng);
        let candidates: Vec<Vec<f64>> = (0..3).map(|_| cube3(&mut rng)).collect();
        let weights = simplex_interior(&mut rng, 3);
        let mixed: Vec<f64> = (0..3)
            .map(|j| (0..3).map(|k| weights[k] * candidates[k][j]).sum())
            .collect();
        let lhs = euclid.bregman(&x, &mixed).unwrap();
        let rhs: f64 = (0..3)
            .map(|k| weights[k] * euclid.bregman(&x, &candidates[k]).unwrap())
            .sum();
        assert!(lhs <= rhs + 1e-10, "second-argument convexity: {lhs} > {rhs}");
    }
    let box_domain = Domain::new_box(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let ball_center = vec![0.2, -0.1, 0.3];
    let ball_domain = Domain::ball(ball_center.clone(), 1.2).unwrap();
    let full_domain = Domain::full_space(3).unwrap();
    for case in 0..1000usize {
        let (domain, x, z) = match case % 4 {
            0 => (
                &simplex,
                simplex_interior(&mut rng, 3),
                simplex_interior(&mut rng, 3),
            ),
            1 => (&box_domain, box3(&mut rng), box3(&mut rng)),
            2 => (
                &ball_domain,
                ball_interior(&mut rng, &ball_center, 1.2, 0.99),
                ball_interior(&mut rng, &ball_center, 1.2, 0.99),
            ),
            _ => (&full_domain, cube3(&mut rng), cube3(&mut rng)),
        };
        let g: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let alpha = 0.01 + 1.5 * rng.random::<f64>();
        let step = euclid.mirror_step(domain, &x, &g, alpha).unwrap();
        let optimality: f64 = (0..3)
            .map(|j| (alpha * g[j] + step[j] - x[j]) * (z[j] - step[j]))
            .sum();
        assert!(optimality >= -1e-8, "euclidean step optimality {optimality}");
    }
    println!("acceptance: geometry_identities ... PASS");
}

/// Monte-Carlo estimates of the clipped oracle's bias and fluctuation stay
/// inside 1.2x their theoretical envelopes once the noise scale has been
/// certified, and the diagnostic refuses points where the exact gradient
/// exceeds half the clipping level.
#[test]
fn clipped_oracle_envelopes() {
    let started = Instant::now();
    let problem = Problem::generate_regression(3, 2, 9001).unwrap();
    let x = vec![0.15, -0.1];
    let gradient = problem.gradient(0, &x).unwrap();
    let gradient_norm = l2(&gradient);
    assert!(gradient_norm > 0.0);

    for (mut noise, tag) in [
        (NoiseModel::shifted_pareto(2.0, 0.5, 1.8).unwrap(), 0u64),
        (NoiseModel::gaussian(0.7, 2.0).unwrap(), 1u64),
    ] {
        let sigma = noise
            .certify_sigma(2, 10_000_000, derive_seed(4242, &[0x51f4, tag]))
            .unwrap();
        assert!(sigma.is_finite() && sigma > 0.0);
        let level = (2.5 * gradient_norm).max(1.0);
        let report = clipped_oracle_diagnostic(
            &problem,
            0,
            &x,
            &noise,
            level,
            1_000_000,
            derive_seed(4242, &[0xd1a6, tag]),
        )
        .unwrap();
        assert!(
            report.bias_norm <= 1.2 * report.bias_bound,
            "bias {} over envelope {}",
            report.bias_norm,
            report.bias_bound
        );
        assert!(
            report.second_moment <= 1.2 * report.second_moment_bound,
            "second moment {} over envelope {}",
            report.second_moment,
            report.second_moment_bound
        );

        // The envelopes are only claimed when ||grad|| <= level / 2.
        let too_low = gradient_norm * 1.5;
        assert!(
            clipped_oracle_diagnostic(&problem, 0, &x, &noise, too_low, 1_000_000, 7).is_err()
        );
    }
    assert!(started.elapsed().as_secs() < 30, "diagnostic budget exceeded");
    println!("acceptance: clipped_oracle_envelopes ... PASS");
}

/// The minimax exponent pair meets both schedule inequalities with equality
/// to 1e-12, the stepsize-level product never exceeds one over a million
/// iterations, and the six convergence series change by less than 5% per
/// horizon doubling between 1e4 and 1e5 at the reference scale.
#[test]
fn schedule_validation() {
    for p in [1.2, 1.5, 1.8, 2.0] {
        let (kappa, mu) = minimax_pair(p).unwrap();
        assert!((kappa - (mu + 0.5)).abs() <= 1e-12, "p = {p}");
        assert!((kappa - (1.0 - mu * (p - 1.0))).abs() <= 1e-12, "p = {p}");

        let params =
            ScheduleParams::minimax(p, 1.01, 2.0, ScheduleVariant::BoundedGradient).unwrap();
        for t in 1..=1_000_000u64 {
            let product = params.alpha(t) * params.lambda(t);
            assert!(product <= 1.0, "alpha*lambda = {product} at t = {t}, p = {p}");
        }
    }

    // A valid non-minimax pair passes the same product check on a shorter
    // scan: the inequalities, not the exact pair, drive the property.
    let loose = ScheduleParams::new(
        1.8,
        0.3,
        0.85,
        1.01,
        2.0,
        ScheduleVariant::BoundedGradient,
    )
    .unwrap();
    for t in 1..=10_000u64 {
        assert!(loose.alpha(t) * loose.lambda(t) <= 1.0);
    }

    let params =
        ScheduleParams::minimax(1.8, 1.01, 2.0, ScheduleVariant::BoundedGradient).unwrap();
    let horizons = [10_000u64, 20_000, 40_000, 80_000, 100_000];
    let sums: Vec<_> = horizons
        .iter()
        .map(|&h| series_partial_sums(&params, 2, h).unwrap())
        .collect();
    for pair in sums.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        let components = [
            (lo.c0, hi.c0),
            (lo.c1, hi.c1),
            (lo.c2, hi.c2),
            (lo.c3, hi.c3),
            (lo.c4, hi.c4),
            (lo.c5, hi.c5),
        ];
        for (older, newer) in components {
            assert!(older.is_finite() && older > 0.0);
            let change = (newer - older) / older;
            assert!(
                change.abs() < 0.05,
                "series moved {change} between horizons {} and {}",
                lo.horizon,
                hi.horizon
            );
        }
    }
    println!("acceptance: schedule_validation ... PASS");
}

/// With one client, no noise, and a clipping floor high enough that no
/// gradient is ever shortened, the federation engine reproduces the plain
/// descent recursion bit for bit over a thousand iterations.
#[test]
fn oracle_equivalence_noiseless() {
    let problem = Problem::generate_regression(1, 2, 606).unwrap();
    let config = FederationConfig {
        clients: 1,
        clock: CommClock::new(1, 1000).unwrap(),
        schedule: ScheduleParams::minimax(2.0, 1.01, 10.0, ScheduleVariant::BoundedGradient)
            .unwrap(),
        geometry: MirrorGeometry::euclidean(2).unwrap(),
        domain: Domain::full_space(2).unwrap(),
        problem: problem.clone(),
        noise: NoiseModel::none(2.0).unwrap(),
        master_seed: 31,
        initializer: Initializer::Default,
        assertion_mode: AssertionMode::Strict,
        record_trajectory: true,
        checkpoint_stride: 1001,
        workers: 1,
    };
    let run = federation::run(&config, 0.0).unwrap();
    let clip_events: f64 = run.records.iter().map(|r| r.clip_fraction).sum();
    assert_eq!(clip_events, 0.0, "the floor must keep clipping inactive");

    // Reference recursion, written out independently of the engine: the
    // same schedule formulas evaluated inline, an unclipped gradient, and
    // an explicit unconstrained update.
    let mu = 1.0 / (2.0 * 2.0);
    let kappa = mu + 0.5;
    let gamma = 1.01;
    let c_star = 10.0;
    let mut x = vec![0.0, 0.0];
    let mut path = vec![x.clone()];
    for t in 1..=1000u64 {
        let tf = t as f64;
        let lambda = tf.powf(mu).max(c_star);
        let alpha = (1.0 + tf.ln()).powf(-gamma) * tf.powf(-(kappa - mu)) / lambda;
        let g = problem.gradient(0, &x).unwrap();
        assert!(l2(&g) <= lambda, "reference path crossed the clipping level");
        x = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
        path.push(x.clone());
    }

    let trajectory = run.trajectory.as_ref().unwrap();
    assert_eq!(trajectory.len(), path.len());
    for (t, states) in trajectory.iter().enumerate() {
        for (engine, reference) in states[0].iter().zip(&path[t]) {
            assert_eq!(
                engine.to_bits(),
                reference.to_bits(),
                "trajectories split at iteration {}",
                t + 1
            );
        }
    }
    assert!(
        l2_dist(&path[1000], &path[0]) > 1e-3,
        "the reference path must actually move"
    );
    println!("acceptance: oracle_equivalence_noiseless ... PASS");
}

/// Desk-scale sweeps reproduce the qualitative trends: the optimality gap
/// grows with the client count and the communication period, and shrinks as
/// the noise tail becomes lighter, each with a 5% tie slack.
#[test]
fn sweep_trends_desk_scale() {
    let started = Instant::now();
    let sweep_means = |key: &str| -> Vec<f64> {
        let cfg = parse_config(&format!("sweep = {key}\n")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(out.summary.len(), 3 * cfg.repetitions);
        assert_eq!(out.curves.len(), 3);
        out.summary
            .chunks(cfg.repetitions)
            .map(|rows| mean(&rows.iter().map(|r| r.global_error).collect::<Vec<f64>>()))
            .collect()
    };

    let by_clients = sweep_means("clients");
    for pair in by_clients.windows(2) {
        assert!(
            pair[1] >= pair[0] * 0.95,
            "error should grow with clients: {by_clients:?}"
        );
    }
    let by_period = sweep_means("period");
    for pair in by_period.windows(2) {
        assert!(
            pair[1] >= pair[0] * 0.95,
            "error should grow with the period: {by_period:?}"
        );
    }
    let by_tail = sweep_means("tail_p");
    for pair in by_tail.windows(2) {
        assert!(
            pair[1] <= pair[0] * 1.05,
            "error should shrink with lighter tails: {by_tail:?}"
        );
    }
    assert!(started.elapsed().as_secs() < 600, "sweep budget exceeded");
    println!("acceptance: sweep_trends_desk_scale ... PASS");
}

/// Log-log regression on the checkpointed optimality gap yields a clearly
/// negative convergence rate for every repetition of the light-tail run.
#[test]
fn rate_slope_sanity() {
    let cfg = parse_config("tail_p = 2.0\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(out.summary.len(), cfg.repetitions);
    for row in &out.summary {
        assert!(
            row.fitted_slope.is_finite(),
            "slope fit rejected for repetition {}",
            row.repetition
        );
        assert!(
            row.fitted_slope <= -0.10,
            "slope {} too shallow for repetition {}",
            row.fitted_slope,
            row.repetition
        );
    }
    println!("acceptance: rate_slope_sanity ... PASS");
}

/// Re-running the same configuration, at any worker count, emits byte-for-
/// byte identical CSV files.
#[test]
fn determinism_byte_identical() {
    let run_once = |workers: usize| -> (String, String) {
        let cfg = parse_config(&format!(
            "rounds = 300\nrepetitions = 2\nworkers = {workers}\n"
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path()).unwrap();
        (
            std::fs::read_to_string(dir.path().join("summary.csv")).unwrap(),
            std::fs::read_to_string(dir.path().join("curve.csv")).unwrap(),
        )
    };
    let first = run_once(1);
    let repeat = run_once(1);
    let threaded = run_once(4);
    let oversubscribed = run_once(7);
    assert_eq!(first, repeat, "rerun changed the emitted bytes");
    assert_eq!(first, threaded, "worker count changed the emitted bytes");
    assert_eq!(first, oversubscribed, "worker count changed the emitted bytes");
    println!("acceptance: determinism_byte_identical ... PASS");
}
