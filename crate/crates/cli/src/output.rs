//! Deterministic CSV and plot-script emission.
//!
//! All files are UTF-8, comma-separated with a header row and LF line
//! endings. Floats are written with 17 significant digits so re-parsing
//! reproduces the in-memory value exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::Result;

/// 17-significant-digit decimal form; round-trips every finite `f64`.
pub fn float17(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CURVE_HEADER: &str =
    "t,f_gap_avg_clients,consensus_max,consensus_bound,alpha_t,lambda_t,clip_fraction";

pub const SUMMARY_HEADER: &str = "sweep_param,value,repetition,seed,T,global_error,\
final_consensus_max,mean_clip_fraction,fitted_slope";

/// One checkpointed metrics row of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub t: u64,
    pub f_gap_avg_clients: f64,
    pub consensus_max: f64,
    pub consensus_bound: f64,
    pub alpha_t: f64,
    pub lambda_t: f64,
    pub clip_fraction: f64,
}

/// One (sweep value, repetition) row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_param: String,
    pub value: String,
    pub repetition: usize,
    pub seed: u64,
    pub horizon: u64,
    pub global_error: f64,
    pub final_consensus_max: f64,
    pub mean_clip_fraction: f64,
    /// NaN when the checkpoint curve was too short or too flat to fit.
    pub fitted_slope: f64,
}

pub fn render_curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t,
            float17(r.f_gap_avg_clients),
            float17(r.consensus_max),
            float17(r.consensus_bound),
            float17(r.alpha_t),
            float17(r.lambda_t),
            float17(r.clip_fraction),
        ));
    }
    out
}

pub fn render_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.sweep_param,
            r.value,
            r.repetition,
            r.seed,
            r.horizon,
            float17(r.global_error),
            float17(r.final_consensus_max),
            float17(r.mean_clip_fraction),
            float17(r.fitted_slope),
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Companion gnuplot script plotting every emitted curve file on log-log
/// axes; data files are the contract, the script is a convenience.
pub fn render_plot_script(curve_files: &[String]) -> String {
    let mut out = String::new();
    out.push_str("set datafile separator ','\n");
    out.push_str("set logscale xy\n");
    out.push_str("set xlabel 't'\n");
    out.push_str("set ylabel 'objective gap'\n");
    out.push_str("set key top right\n");
    out.push_str("plot \\\n");
    for (i, name) in curve_files.iter().enumerate() {
        let sep = if i + 1 < curve_files.len() { ", \\\n" } else { "\n" };
        out.push_str(&format!(
            "  '{name}' using 1:2 skip 1 with lines title '{name}'{sep}"
        ));
    }
    out
}

/// Parses a rendered CSV back into its float cells (header skipped).
/// Used by round-trip checks; integer columns are parsed as floats too.
pub fn parse_csv_floats(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|cell| cell.parse::<f64>().unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}
