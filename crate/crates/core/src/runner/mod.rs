//! Experiment orchestration: the per-run round loop, suites of runs across
//! policies, sweeps, and the CSV artifacts they leave behind.

mod config;
mod output;
mod run;
mod suite;

pub use config::{
    CostConfig, EnvKind, EnvironmentSpec, ExperimentConfig, KReq, LengthscaleRule, ModelSpec, PolicyParams, SweepAxes,
    SweepAxis, PAPER_MAIN_RULE,
};
pub use output::{
    aggregate_dir, read_heldout_csv, read_rounds_csv, read_summary_csv, write_heldout_csv, write_rounds_csv,
    write_summary_csv, HeldoutRow, RoundRow, SummaryRow, HELDOUT_HEADER, ROUNDS_HEADER, SUMMARY_HEADER,
};
pub use run::{prepare_run, run_policy, run_single, RunArtifacts, RunContext};
pub use suite::{
    aggregate_runs, fit_matched_from_rounds, load_schedule, run_suite, run_sweep, save_schedule, write_suite,
    PolicyAggregate, SuiteOutcome, SweepRow, ACTION_WINDOW,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::env::EnvError;
use crate::mediators::MediatorError;
use crate::metrics::MetricsError;
use crate::model::ModelError;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "ODM_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mediator(#[from] MediatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("every run failed; first failure: {0}")]
    AllRunsFailed(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl RunnerError {
    /// Process exit code: 1 for configuration problems, 2 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// `printf("%.9g")`: nine significant digits, trailing zeros dropped.
pub fn fmt_float(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Round to nine significant digits first; the exponent of the rounded
    // value picks the notation.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_owned()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}
