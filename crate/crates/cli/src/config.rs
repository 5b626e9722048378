//! Flat `key = value` experiment configuration.
//!
//! Grammar: one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored. Every key has a default, so an empty file is a
//! valid desk-scale configuration. Unknown and duplicate keys are rejected
//! with the offending key and line named.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use fedsmd::schedules::{minimax_pair, ScheduleParams, ScheduleVariant};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorChoice {
    Euclidean,
    Entropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainChoice {
    Simplex,
    Box,
    Ball,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChoice {
    Pareto,
    Gaussian,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertionChoice {
    Strict,
    Record,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    None,
    Clients,
    Period,
    TailP,
}

impl SweepKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepKind::None => "none",
            SweepKind::Clients => "clients",
            SweepKind::Period => "period",
            SweepKind::TailP => "tail_p",
        }
    }
}

/// Fully parsed and statically validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub clients: usize,
    pub period: u64,
    pub rounds: u64,
    pub tail_p: f64,
    pub gamma: f64,
    /// Explicit schedule exponents; `None` selects the rate-optimal pair.
    pub mu: Option<f64>,
    pub kappa: Option<f64>,
    pub mirror: MirrorChoice,
    pub domain: DomainChoice,
    pub dimension: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub schedule_variant: ScheduleVariant,
    pub out_dir: PathBuf,
    pub sweep: SweepKind,
    /// Sweep grid; populated with the figure defaults when a sweep is
    /// selected without explicit values.
    pub sweep_values: Vec<f64>,
    pub noise: NoiseChoice,
    pub noise_beta: f64,
    pub noise_scale: f64,
    pub noise_std: f64,
    pub checkpoint_stride: u64,
    pub assertion: AssertionChoice,
    pub workers: usize,
    /// Confidence parameter of the smoothness-variant scale constant.
    pub delta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            clients: 4,
            period: 2,
            rounds: 10_000,
            tail_p: 1.8,
            gamma: 1.01,
            mu: None,
            kappa: None,
            mirror: MirrorChoice::Entropic,
            domain: DomainChoice::Simplex,
            dimension: 2,
            seed: 2024,
            repetitions: 5,
            schedule_variant: ScheduleVariant::BoundedGradient,
            out_dir: PathBuf::from("out"),
            sweep: SweepKind::None,
            sweep_values: Vec::new(),
            noise: NoiseChoice::Pareto,
            noise_beta: 2.0,
            noise_scale: 0.5,
            noise_std: 1.0,
            checkpoint_stride: 500,
            assertion: AssertionChoice::Strict,
            workers: 1,
            delta: 0.01,
        }
    }
}

impl ExperimentConfig {
    /// Iteration horizon `T = 1 + period * rounds`.
    pub fn horizon(&self) -> u64 {
        1 + self.period * self.rounds
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "clients",
    "period",
    "rounds",
    "tail_p",
    "gamma",
    "mu",
    "kappa",
    "mirror",
    "domain",
    "dimension",
    "seed",
    "repetitions",
    "schedule_variant",
    "out_dir",
    "sweep",
    "sweep_values",
    "noise",
    "noise_beta",
    "noise_scale",
    "noise_std",
    "checkpoint_stride",
    "assertion",
    "workers",
    "delta",
];

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| CliError::parse(line, format!("key '{key}' expects a nonnegative integer, got '{value}'")))
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::parse(line, format!("key '{key}' expects a nonnegative integer, got '{value}'")))
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::parse(line, format!("key '{key}' expects a number, got '{value}'")))
}

fn parse_value_list(line: usize, value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for piece in value.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(CliError::parse(line, "key 'sweep_values' has an empty entry"));
        }
        out.push(parse_f64(line, "sweep_values", piece)?);
    }
    Ok(out)
}

/// Parses config text. Line numbers in errors are 1-based.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut sweep_values: Option<Vec<f64>> = None;

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| CliError::parse(line, format!("expected 'key = value', got '{trimmed}'")))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::parse(line, format!("unknown key '{key}'")));
        }
        if !seen.insert(key.to_string()) {
            return Err(CliError::parse(line, format!("duplicate key '{key}'")));
        }
        if value.is_empty() {
            return Err(CliError::parse(line, format!("key '{key}' has an empty value")));
        }
        match key {
            "clients" => cfg.clients = parse_usize(line, key, value)?,
            "period" => cfg.period = parse_u64(line, key, value)?,
            "rounds" => cfg.rounds = parse_u64(line, key, value)?,
            "tail_p" => cfg.tail_p = parse_f64(line, key, value)?,
            "gamma" => cfg.gamma = parse_f64(line, key, value)?,
            "mu" => cfg.mu = Some(parse_f64(line, key, value)?),
            "kappa" => cfg.kappa = Some(parse_f64(line, key, value)?),
            "mirror" => {
                cfg.mirror = match value {
                    "euclidean" => MirrorChoice::Euclidean,
                    "entropic" => MirrorChoice::Entropic,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!("key 'mirror' expects euclidean|entropic, got '{value}'"),
                        ))
                    }
                }
            }
            "domain" => {
                cfg.domain = match value {
                    "simplex" => DomainChoice::Simplex,
                    "box" => DomainChoice::Box,
                    "ball" => DomainChoice::Ball,
                    "free" => DomainChoice::Free,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!("key 'domain' expects simplex|box|ball|free, got '{value}'"),
                        ))
                    }
                }
            }
            "dimension" => cfg.dimension = parse_usize(line, key, value)?,
            "seed" => cfg.seed = parse_u64(line, key, value)?,
            "repetitions" => cfg.repetitions = parse_usize(line, key, value)?,
            "schedule_variant" => {
                cfg.schedule_variant = match value {
                    "smooth" => ScheduleVariant::Smoothness,
                    "bounded_gradient" => ScheduleVariant::BoundedGradient,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!(
                                "key 'schedule_variant' expects smooth|bounded_gradient, got '{value}'"
                            ),
                        ))
                    }
                }
            }
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "sweep" => {
                cfg.sweep = match value {
                    "none" => SweepKind::None,
                    "clients" => SweepKind::Clients,
                    "period" => SweepKind::Period,
                    "tail_p" => SweepKind::TailP,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!("key 'sweep' expects none|clients|period|tail_p, got '{value}'"),
                        ))
                    }
                }
            }
            "sweep_values" => sweep_values = Some(parse_value_list(line, value)?),
            "noise" => {
                cfg.noise = match value {
                    "pareto" => NoiseChoice::Pareto,
                    "gaussian" => NoiseChoice::Gaussian,
                    "none" => NoiseChoice::None,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!("key 'noise' expects pareto|gaussian|none, got '{value}'"),
                        ))
                    }
                }
            }
            "noise_beta" => cfg.noise_beta = parse_f64(line, key, value)?,
            "noise_scale" => cfg.noise_scale = parse_f64(line, key, value)?,
            "noise_std" => cfg.noise_std = parse_f64(line, key, value)?,
            "checkpoint_stride" => cfg.checkpoint_stride = parse_u64(line, key, value)?,
            "assertion" => {
                cfg.assertion = match value {
                    "strict" => AssertionChoice::Strict,
                    "record" => AssertionChoice::Record,
                    "off" => AssertionChoice::Off,
                    _ => {
                        return Err(CliError::parse(
                            line,
                            format!("key 'assertion' expects strict|record|off, got '{value}'"),
                        ))
                    }
                }
            }
            "workers" => cfg.workers = parse_usize(line, key, value)?,
            "delta" => cfg.delta = parse_f64(line, key, value)?,
            _ => unreachable!("key list checked above"),
        }
    }

    finish_config(cfg, sweep_values)
}

/// Default value grids for the three supported sweeps.
fn default_sweep_values(kind: SweepKind) -> Vec<f64> {
    match kind {
        SweepKind::None => Vec::new(),
        SweepKind::Clients => vec![2.0, 4.0, 8.0],
        SweepKind::Period => vec![1.0, 2.0, 4.0],
        SweepKind::TailP => vec![1.4, 1.8, 2.0],
    }
}

fn require_positive_integers(kind: &str, values: &[f64]) -> Result<()> {
    for &v in values {
        if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0) {
            return Err(CliError::config(format!(
                "sweep_values for sweep = {kind} must be positive integers, got {v}"
            )));
        }
    }
    Ok(())
}

/// Validates the schedule parameters through the engine's own checker so
/// rejects name the offending field. The scale constant is resolved later
/// from the problem instance; a placeholder keeps this check static.
fn validate_schedule_params(cfg: &ExperimentConfig, tail_p: f64) -> Result<()> {
    let (kappa, mu) = match (cfg.mu, cfg.kappa) {
        (Some(mu), Some(kappa)) => (kappa, mu),
        (None, None) => minimax_pair(tail_p)?,
        _ => {
            return Err(CliError::config(
                "mu and kappa must be given together or both omitted",
            ))
        }
    };
    ScheduleParams::new(tail_p, mu, kappa, cfg.gamma, 1.0, cfg.schedule_variant)?;
    Ok(())
}

fn finish_config(mut cfg: ExperimentConfig, sweep_values: Option<Vec<f64>>) -> Result<ExperimentConfig> {
    if cfg.clients == 0 {
        return Err(CliError::config("clients must be at least 1"));
    }
    if cfg.period == 0 {
        return Err(CliError::config("period must be at least 1"));
    }
    if cfg.rounds == 0 {
        return Err(CliError::config("rounds must be at least 1"));
    }
    if cfg.dimension == 0 {
        return Err(CliError::config("dimension must be at least 1"));
    }
    if cfg.repetitions == 0 {
        return Err(CliError::config("repetitions must be at least 1"));
    }
    if cfg.checkpoint_stride == 0 {
        return Err(CliError::config("checkpoint_stride must be at least 1"));
    }
    if cfg.workers == 0 {
        return Err(CliError::config("workers must be at least 1"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(CliError::config(format!(
            "delta must lie in (0, 1), got {}",
            cfg.delta
        )));
    }

    if cfg.mirror == MirrorChoice::Entropic && cfg.domain != DomainChoice::Simplex {
        return Err(CliError::config(
            "mirror = entropic requires domain = simplex",
        ));
    }
    if cfg.domain == DomainChoice::Free && cfg.schedule_variant == ScheduleVariant::BoundedGradient
    {
        return Err(CliError::config(
            "domain = free has no finite gradient bound; use schedule_variant = smooth",
        ));
    }

    match cfg.noise {
        NoiseChoice::Pareto => {
            if !(cfg.noise_beta > 1.0) {
                return Err(CliError::config(format!(
                    "noise_beta must exceed 1, got {}",
                    cfg.noise_beta
                )));
            }
            if !(cfg.noise_scale > 0.0) {
                return Err(CliError::config(format!(
                    "noise_scale must be positive, got {}",
                    cfg.noise_scale
                )));
            }
        }
        NoiseChoice::Gaussian => {
            if !(cfg.noise_std > 0.0) {
                return Err(CliError::config(format!(
                    "noise_std must be positive, got {}",
                    cfg.noise_std
                )));
            }
        }
        NoiseChoice::None => {}
    }

    match &sweep_values {
        Some(values) => {
            if cfg.sweep == SweepKind::None {
                return Err(CliError::config(
                    "sweep_values given but sweep = none; set sweep to clients|period|tail_p",
                ));
            }
            if values.is_empty() {
                return Err(CliError::config("sweep_values must be non-empty"));
            }
            cfg.sweep_values = values.clone();
        }
        None => cfg.sweep_values = default_sweep_values(cfg.sweep),
    }

    match cfg.sweep {
        SweepKind::None => {}
        SweepKind::Clients => require_positive_integers("clients", &cfg.sweep_values)?,
        SweepKind::Period => {
            require_positive_integers("period", &cfg.sweep_values)?;
            // The period sweep holds the horizon fixed, so every swept
            // period must divide the configured number of update steps.
            let steps = cfg.horizon() - 1;
            for &v in &cfg.sweep_values {
                let p = v as u64;
                if steps % p != 0 {
                    return Err(CliError::config(format!(
                        "period sweep keeps T = {} fixed, but {} does not divide T - 1 = {}",
                        cfg.horizon(),
                        p,
                        steps
                    )));
                }
            }
        }
        SweepKind::TailP => {
            if cfg.mu.is_some() || cfg.kappa.is_some() {
                return Err(CliError::config(
                    "tail_p sweep recomputes mu and kappa per value; omit explicit mu/kappa",
                ));
            }
        }
    }

    // Schedule exponents, gamma, and tail order validated with field names.
    validate_schedule_params(&cfg, cfg.tail_p)?;
    if cfg.sweep == SweepKind::TailP {
        for &p in &cfg.sweep_values {
            validate_schedule_params(&cfg, p)?;
        }
    }

    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Replaces the round count and re-runs the cross-field validation (the
/// period-sweep divisibility check depends on the horizon).
pub fn with_rounds(mut cfg: ExperimentConfig, rounds: u64) -> Result<ExperimentConfig> {
    cfg.rounds = rounds;
    let values = match cfg.sweep {
        SweepKind::None => None,
        _ => Some(cfg.sweep_values.clone()),
    };
    finish_config(cfg, values)
}
