//! Clipped stochastic mirror descent with periodic federated averaging.
//!
//! A fleet of `m` clients minimizes a sum of local objectives over a shared
//! convex domain. Each iteration every client draws a noisy gradient of its
//! own objective, clips it to the current level `lambda_t`, and takes a
//! mirror-descent step with stepsize `alpha_t`. Every `P` iterations a server
//! replaces all client states with their exact average. The noise may be
//! heavy tailed: only a `p`-th moment with `p` in (1, 2] is assumed, and the
//! clipping/stepsize schedules are chosen so the run stays stable anyway.
//!
//! The crate is organized around that loop:
//!
//! * [`geometry`]: mirror maps (Euclidean and negative entropy), Bregman
//!   divergences, and the mirror-descent step itself.
//! * [`domains`]: feasible sets and their Euclidean projections.
//! * [`clipping`]: norm clipping with a full report of what happened.
//! * [`noise`]: noise models, stochastic gradient oracles, and Monte-Carlo
//!   diagnostics for the clipped oracle's bias and variance envelopes.
//! * [`schedules`]: stepsize/clipping schedules, the communication clock,
//!   the consensus bound, and series diagnostics for the schedule constants.
//! * [`problems`]: concrete objectives, exact minimizers, and error metrics.
//! * [`federation`]: the multi-client engine with runtime invariant checks.
//! * [`rng`]: counter-style deterministic random streams keyed by
//!   (master seed, agent, iteration), so runs are bit-reproducible for any
//!   worker count or execution order.

pub mod clipping;
pub mod domains;
mod error;
pub mod federation;
pub mod geometry;
pub mod noise;
pub mod problems;
pub mod rng;
pub mod schedules;
pub(crate) mod vecmath;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
