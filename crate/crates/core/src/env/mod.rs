//! Context streams, expert ground truth, and the simulated human.

mod gauss_sine;
mod human;
mod tabular;

pub use gauss_sine::{gauss_sine_draw, gauss_sine_label, GaussSineParams, GAUSS_SINE_CLASSES};
pub use human::{human_action, NoisyHumanParams};
pub use tabular::{load_tabular, TabularEnvironment, TabularOptions, TabularPool};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("data file not found: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("unknown label column {0:?}")]
    UnknownLabelColumn(String),
    #[error("unknown feature column {0:?}")]
    UnknownFeatureColumn(String),
    #[error("insufficient examples: need {needed}, pool has {available}")]
    InsufficientExamples { needed: usize, available: usize },
    #[error("non-numeric feature value {value:?} at row {row}, column {column:?}")]
    InvalidFeature { row: usize, column: String, value: String },
    #[error("non-finite feature value at row {row}, column {column:?}")]
    NonFiniteFeature { row: usize, column: String },
    #[error("label column has {0} distinct value(s); need at least 2")]
    TooFewClasses(usize),
    #[error("class {0} has no examples in the sampled stream")]
    MissingClass(usize),
}
