//! Local objectives, their exact minimizers, and error metrics.
//!
//! A problem owns one objective per agent; the global objective is the plain
//! sum over agents. Regression instances can be generated pseudorandomly,
//! serialized to a plain-text matrix, and solved exactly on the supported
//! domains so that error metrics are measured against the true optimum.

use crate::domains::Domain;
use crate::rng::seeded;
use crate::vecmath::{all_finite, dot, l2_dist, l2_norm};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// Agent `i` owns `f_i(x) = 0.5 * (<a_i, x> - b_i)^2`.
    LinearRegression {
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
    /// Every one of `agents` identical agents owns
    /// `f_i(x) = 0.5 * scale * ||x - center||^2`.
    Quadratic {
        center: Vec<f64>,
        scale: f64,
        agents: usize,
    },
}

/// Exact minimizer of the global objective over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub value: f64,
}

impl Problem {
    pub fn linear_regression(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::config(
                "regression needs one feature row per target, at least one agent",
            ));
        }
        let n = features[0].len();
        if n == 0 {
            return Err(Error::config("regression features must be nonempty"));
        }
        for row in &features {
            if row.len() != n || !all_finite(row) {
                return Err(Error::config(
                    "regression feature rows must be rectangular and finite",
                ));
            }
        }
        if !all_finite(&targets) {
            return Err(Error::config("regression targets must be finite"));
        }
        Ok(Problem::LinearRegression { features, targets })
    }

    pub fn quadratic(center: Vec<f64>, scale: f64, agents: usize) -> Result<Self> {
        if center.is_empty() || !all_finite(&center) {
            return Err(Error::config("quadratic center must be nonempty and finite"));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::config("quadratic scale must be positive"));
        }
        if agents == 0 {
            return Err(Error::config("problem needs at least one agent"));
        }
        Ok(Problem::Quadratic {
            center,
            scale,
            agents,
        })
    }

    /// Synthetic regression instance: features are uniform on [-1, 1]^n,
    /// targets are `<a_i, c> + eps_i` with standard normal noise, where `c`
    /// has ones in the first `floor(n/2)` coordinates and zeros elsewhere.
    ///
    /// Draws run agent by agent from a single seeded stream, so instances
    /// that share a seed agree on their common prefix of agents.
    pub fn generate_regression(agents: usize, dimension: usize, seed: u64) -> Result<Self> {
        if agents == 0 || dimension == 0 {
            return Err(Error::config(
                "regression generation needs at least one agent and one dimension",
            ));
        }
        let mut rng = seeded(seed);
        let ones = dimension / 2;
        let mut features = Vec::with_capacity(agents);
        let mut targets = Vec::with_capacity(agents);
        for _ in 0..agents {
            let a: Vec<f64> = (0..dimension)
                .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                .collect();
            let eps: f64 = rng.sample(StandardNormal);
            let signal: f64 = a[..ones].iter().sum();
            targets.push(signal + eps);
            features.push(a);
        }
        Ok(Problem::LinearRegression { features, targets })
    }

    pub fn agents(&self) -> usize {
        match self {
            Problem::LinearRegression { features, .. } => features.len(),
            Problem::Quadratic { agents, .. } => *agents,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Problem::LinearRegression { features, .. } => features[0].len(),
            Problem::Quadratic { center, .. } => center.len(),
        }
    }

    fn check_input(&self, agent: usize, x: &[f64]) -> Result<()> {
        if agent >= self.agents() {
            return Err(Error::input(format!(
                "agent index {agent} out of range (have {})",
                self.agents()
            )));
        }
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Local objective of one agent.
    pub fn local_objective(&self, agent: usize, x: &[f64]) -> Result<f64> {
        self.check_input(agent, x)?;
        Ok(match self {
            Problem::LinearRegression { features, targets } => {
                let r = dot(&features[agent], x) - targets[agent];
                0.5 * r * r
            }
            Problem::Quadratic { center, scale, .. } => {
                let d = l2_dist(x, center);
                0.5 * scale * d * d
            }
        })
    }

    /// Global objective: the sum of all local objectives.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for agent in 0..self.agents() {
            acc += self.local_objective(agent, x)?;
        }
        Ok(acc)
    }

    /// Gradient of one agent's local objective.
    pub fn gradient(&self, agent: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(agent, x)?;
        Ok(match self {
            Problem::LinearRegression { features, targets } => {
                let r = dot(&features[agent], x) - targets[agent];
                features[agent].iter().map(|&a| r * a).collect()
            }
            Problem::Quadratic { center, scale, .. } => {
                x.iter().zip(center).map(|(&v, &c)| scale * (v - c)).collect()
            }
        })
    }

    /// Smoothness constant: every local gradient is `L`-Lipschitz.
    pub fn smoothness(&self) -> f64 {
        match self {
            Problem::LinearRegression { features, .. } => features
                .iter()
                .map(|a| dot(a, a))
                .fold(0.0, f64::max),
            Problem::Quadratic { scale, .. } => *scale,
        }
    }

    /// Uniform bound on local gradient norms over a bounded domain.
    ///
    /// Unbounded domains have no such bound and are rejected.
    pub fn gradient_bound(&self, domain: &Domain) -> Result<f64> {
        if domain.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: domain.dimension(),
            });
        }
        if matches!(domain, Domain::FullSpace { .. }) {
            return Err(Error::config(
                "gradient bound is unavailable on an unbounded domain; use the smoothness-based schedule instead",
            ));
        }
        Ok(match self {
            Problem::LinearRegression { features, targets } => {
                let mut bound = 0.0f64;
                for (a, &b) in features.iter().zip(targets) {
                    let norm = l2_norm(a);
                    let residual_max = match domain {
                        Domain::ProbabilitySimplex { .. } => {
                            let amax = a.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                            amax + b.abs()
                        }
                        Domain::Box { lower, upper } => {
                            let hi: f64 = a
                                .iter()
                                .zip(lower.iter().zip(upper))
                                .map(|(&aj, (&l, &u))| (aj * l).max(aj * u))
                                .sum();
                            let lo: f64 = a
                                .iter()
                                .zip(lower.iter().zip(upper))
                                .map(|(&aj, (&l, &u))| (aj * l).min(aj * u))
                                .sum();
                            (hi - b).max(b - lo)
                        }
                        Domain::EuclideanBall { center, radius } => {
                            (dot(a, center) - b).abs() + norm * radius
                        }
                        Domain::FullSpace { .. } => unreachable!(),
                    };
                    bound = bound.max(norm * residual_max);
                }
                bound
            }
            Problem::Quadratic { center, scale, .. } => {
                let reach = match domain {
                    Domain::ProbabilitySimplex { dimension } => {
                        let mut worst = 0.0f64;
                        for j in 0..*dimension {
                            let mut v = center.clone();
                            for c in v.iter_mut() {
                                *c = -*c;
                            }
                            v[j] += 1.0;
                            worst = worst.max(l2_norm(&v));
                        }
                        worst
                    }
                    Domain::Box { lower, upper } => lower
                        .iter()
                        .zip(upper)
                        .zip(center)
                        .map(|((&l, &u), &c)| (l - c).abs().max((u - c).abs()).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                    Domain::EuclideanBall {
                        center: ball_center,
                        radius,
                    } => l2_dist(ball_center, center) + radius,
                    Domain::FullSpace { .. } => unreachable!(),
                };
                scale * reach
            }
        })
    }

    /// Exact minimizer of the global objective over `domain`.
    ///
    /// Regression is solved by normal equations on the full space, a
    /// closed-form segment parameterization on the 2-simplex, support
    /// enumeration on larger simplices (dimension <= 15), active-set
    /// enumeration on boxes (dimension <= 10), and a dual bisection on
    /// balls. The quadratic problem projects its center.
    pub fn solve_optimum(&self, domain: &Domain) -> Result<Optimum> {
        if domain.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: domain.dimension(),
            });
        }
        if let Problem::Quadratic { center, .. } = self {
            let point = domain.euclidean_project(center)?;
            let value = self.objective(&point)?;
            return Ok(Optimum { point, value });
        }
        let (m, r) = self.normal_system();
        let point = match domain {
            Domain::FullSpace { .. } => gauss_solve(m, r).ok_or_else(|| {
                Error::config(
                    "normal equations are singular: the unconstrained optimum is not unique",
                )
            })?,
            Domain::ProbabilitySimplex { dimension } => {
                if *dimension == 2 {
                    self.solve_simplex_segment()
                } else {
                    self.solve_simplex_enumeration(*dimension)?
                }
            }
            Domain::Box { lower, upper } => self.solve_box_enumeration(&m, &r, lower, upper)?,
            Domain::EuclideanBall { center, radius } => {
                self.solve_ball_dual(&m, &r, center, *radius)?
            }
        };
        let value = self.objective(&point)?;
        Ok(Optimum { point, value })
    }

    /// Normal-equation system of the summed regression objective:
    /// `M = sum_i a_i a_i^T`, `r = sum_i b_i a_i`.
    fn normal_system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (features, targets) = match self {
            Problem::LinearRegression { features, targets } => (features, targets),
            Problem::Quadratic { .. } => unreachable!("quadratic solved by projection"),
        };
        let n = self.dimension();
        let mut m = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        for (a, &b) in features.iter().zip(targets) {
            for j in 0..n {
                r[j] += b * a[j];
                for k in 0..n {
                    m[j][k] += a[j] * a[k];
                }
            }
        }
        (m, r)
    }

    /// Minimizes over the segment {(s, 1-s) : s in [0, 1]}.
    fn solve_simplex_segment(&self) -> Vec<f64> {
        let (features, targets) = match self {
            Problem::LinearRegression { features, targets } => (features, targets),
            Problem::Quadratic { .. } => unreachable!(),
        };
        // f(s) = 0.5 * sum_i (d_i s + e_i)^2 with d_i = a_i0 - a_i1,
        // e_i = a_i1 - b_i; the unconstrained minimizer clamps to [0, 1].
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (a, &b) in features.iter().zip(targets) {
            let d = a[0] - a[1];
            let e = a[1] - b;
            quad += d * d;
            lin += d * e;
        }
        let s = if quad > 0.0 {
            (-lin / quad).clamp(0.0, 1.0)
        } else {
            0.5
        };
        vec![s, 1.0 - s]
    }

    /// Enumerates support sets and solves the equality-constrained
    /// least-squares problem on each; the best feasible candidate is exact
    /// because the true support is among the enumerated ones.
    fn solve_simplex_enumeration(&self, n: usize) -> Result<Vec<f64>> {
        if n > 15 {
            return Err(Error::config(
                "simplex optimum enumeration supports dimension <= 15",
            ));
        }
        let (m, r) = self.normal_system();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let k = support.len();
            // KKT system of min 0.5 x'Mx - r'x subject to sum(x_S) = 1.
            let mut sys = vec![vec![0.0; k + 1]; k + 1];
            let mut rhs = vec![0.0; k + 1];
            for (row, &j) in support.iter().enumerate() {
                for (col, &l) in support.iter().enumerate() {
                    sys[row][col] = m[j][l];
                }
                sys[row][k] = 1.0;
                sys[k][row] = 1.0;
                rhs[row] = r[j];
            }
            rhs[k] = 1.0;
            let Some(sol) = gauss_solve(sys, rhs) else {
                continue;
            };
            if sol[..k].iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut x = vec![0.0; n];
            for (idx, &j) in support.iter().enumerate() {
                x[j] = sol[idx].max(0.0);
            }
            let value = self.objective(&x)?;
            if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
                best = Some((value, x));
            }
        }
        best.map(|(_, x)| x)
            .ok_or_else(|| Error::config("simplex optimum enumeration found no feasible support"))
    }

    /// Enumerates per-coordinate states (free / at lower / at upper) and
    /// solves the reduced normal equations for each.
    fn solve_box_enumeration(
        &self,
        m: &[Vec<f64>],
        r: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Vec<f64>> {
        let n = lower.len();
        if n > 10 {
            return Err(Error::config(
                "box optimum enumeration supports dimension <= 10",
            ));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut state = code;
            let mut fixed = vec![None; n];
            let mut free = Vec::new();
            for j in 0..n {
                match state % 3 {
                    0 => free.push(j),
                    1 => fixed[j] = Some(lower[j]),
                    _ => fixed[j] = Some(upper[j]),
                }
                state /= 3;
            }
            let mut x = vec![0.0; n];
            for j in 0..n {
                if let Some(v) = fixed[j] {
                    x[j] = v;
                }
            }
            if !free.is_empty() {
                let k = free.len();
                let mut sys = vec![vec![0.0; k]; k];
                let mut rhs = vec![0.0; k];
                for (row, &j) in free.iter().enumerate() {
                    rhs[row] = r[j];
                    for (col, &l) in free.iter().enumerate() {
                        sys[row][col] = m[j][l];
                    }
                    for l in 0..n {
                        if let Some(v) = fixed[l] {
                            rhs[row] -= m[j][l] * v;
                        }
                    }
                }
                let Some(sol) = gauss_solve(sys, rhs) else {
                    continue;
                };
                let mut ok = true;
                for (idx, &j) in free.iter().enumerate() {
                    if sol[idx] < lower[j] - 1e-12 || sol[idx] > upper[j] + 1e-12 {
                        ok = false;
                        break;
                    }
                    x[j] = sol[idx].clamp(lower[j], upper[j]);
                }
                if !ok {
                    continue;
                }
            }
            let value = self.objective(&x)?;
            if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
                best = Some((value, x));
            }
        }
        best.map(|(_, x)| x)
            .ok_or_else(|| Error::config("box optimum enumeration found no feasible candidate"))
    }

    /// Trust-region style dual: either the unconstrained solution lies in
    /// the ball, or the constrained optimum solves `(M + nu I) x = r + nu c`
    /// with `||x - c|| = radius` for a unique `nu > 0` found by bisection
    /// (the distance is non-increasing in `nu`).
    fn solve_ball_dual(
        &self,
        m: &[Vec<f64>],
        r: &[f64],
        center: &[f64],
        radius: f64,
    ) -> Result<Vec<f64>> {
        let n = center.len();
        let solve_at = |nu: f64| -> Option<Vec<f64>> {
            let mut sys = m.to_vec();
            let mut rhs = r.to_vec();
            for j in 0..n {
                sys[j][j] += nu;
                rhs[j] += nu * center[j];
            }
            gauss_solve(sys, rhs)
        };
        if let Some(x) = solve_at(0.0) {
            if l2_dist(&x, center) <= radius {
                return Ok(x);
            }
        }
        let mut hi = 1.0;
        loop {
            match solve_at(hi) {
                Some(x) if l2_dist(&x, center) <= radius => break,
                _ => {
                    hi *= 2.0;
                    if hi > 1e18 {
                        return Err(Error::config(
                            "ball optimum bisection failed to bracket the dual variable",
                        ));
                    }
                }
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match solve_at(mid) {
                Some(x) if l2_dist(&x, center) <= radius => hi = mid,
                _ => lo = mid,
            }
        }
        solve_at(hi)
            .ok_or_else(|| Error::config("ball optimum solve became singular at the dual point"))
    }

    /// Serializes a regression instance as plain text: one row per agent,
    /// `n` feature values then the target, space separated.
    pub fn to_matrix_text(&self) -> Result<String> {
        match self {
            Problem::LinearRegression { features, targets } => {
                let mut out = String::new();
                for (a, b) in features.iter().zip(targets) {
                    let mut row: Vec<String> = a.iter().map(|v| format!("{v}")).collect();
                    row.push(format!("{b}"));
                    out.push_str(&row.join(" "));
                    out.push('\n');
                }
                Ok(out)
            }
            Problem::Quadratic { .. } => Err(Error::input(
                "only regression instances have a matrix serialization",
            )),
        }
    }

    /// Parses the format written by [`Problem::to_matrix_text`].
    pub fn from_matrix_text(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::input(format!("line {}: cannot parse `{tok}` as a number", idx + 1))
                })?;
                values.push(v);
            }
            if values.len() < 2 {
                return Err(Error::input(format!(
                    "line {}: need at least one feature and a target",
                    idx + 1
                )));
            }
            let b = values.pop().expect("nonempty");
            features.push(values);
            targets.push(b);
        }
        Problem::linear_regression(features, targets)
    }
}

/// Mean suboptimality of a set of points: `(1/k) sum_l f(x_l) - f_star`.
///
/// Values in `[-1e-9, 0)` are clamped to zero; they only arise from the
/// solver's own tolerance. Anything more negative is returned as is so a
/// broken optimum is visible to callers.
pub fn global_error(problem: &Problem, points: &[Vec<f64>], f_star: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::input("global error needs at least one point"));
    }
    let mut acc = 0.0;
    for x in points {
        acc += problem.objective(x)?;
    }
    let err = acc / points.len() as f64 - f_star;
    if err < 0.0 && err >= -1e-9 {
        Ok(0.0)
    } else {
        Ok(err)
    }
}

/// Dense linear solve with partial pivoting; `None` on (near-)singularity.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |s, &v| s.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|row| (row, m[row][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))?;
        if pivot_val <= tol {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}
