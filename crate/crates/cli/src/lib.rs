//! Experiment runner around the `fedsmd` engine: config-file parsing, the
//! three sweep families (client count, communication period, tail order),
//! rate-slope fitting, and deterministic CSV emission.

pub mod config;
pub mod experiment;
pub mod output;
pub mod slope;

mod error;

pub use error::CliError;

pub type Result<T> = std::result::Result<T, CliError>;
