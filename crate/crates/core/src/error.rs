use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: ragged row, expected {expected} fields but found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: indices not ascending")]
    IndicesNotAscending { line: usize },

    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: usize },

    #[error("no samples")]
    NoSamples,

    #[error("fewer than 2 classes")]
    TooFewClasses,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("fold count k = {k} out of range [2, {n}]")]
    FoldCount { k: usize, n: usize },

    #[error("degenerate pair ({k}, {l}): identical weight columns give an infinite margin")]
    DegeneratePair { k: usize, l: usize },

    #[error("empty subproblem for class pair ({k}, {l})")]
    EmptyPair { k: usize, l: usize },

    #[error("non-finite gradient at {coordinate}")]
    NonFiniteGradient { coordinate: String },

    #[error(
        "objective became non-finite at iteration {iteration} \
         (data_loss={data_loss}, reg_term={reg_term}, eps_term={eps_term})"
    )]
    Diverged {
        iteration: usize,
        data_loss: f64,
        reg_term: f64,
        eps_term: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
