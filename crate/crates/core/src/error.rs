use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the clustering library and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column {column}: cannot read {value:?} as a finite number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("ragged CSV: row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty dataset")]
    Empty,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least as many samples as clusters (n = {n}, K = {k})")]
    TooFewSamples { n: usize, k: usize },

    #[error("degenerate dataset: all points coincide")]
    Degenerate,

    #[error("enumeration budget exceeded: {states} states > {budget}")]
    BudgetExceeded { states: u128, budget: u64 },

    #[error("no ground-truth labels available: {0}")]
    NoLabels(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
