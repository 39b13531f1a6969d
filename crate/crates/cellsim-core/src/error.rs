//! Error type shared by every module in the crate.
//!
//! Variants map one-to-one onto the failure classes a caller can act on:
//! contract violations are caller bugs, configuration errors are bad
//! parameter values, numerical/training errors are runtime divergence,
//! capacity errors mean a resource budget cannot hold the request, and
//! parse/validation/io errors carry enough context to locate bad input.

use std::path::PathBuf;

use crate::mlp::SearchReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An API precondition was violated (wrong dimension, non-finite input,
    /// inconsistent model shape).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter value is outside its documented range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Netlist text that does not conform to the `.bench` grammar.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally well-formed input that violates a semantic rule
    /// (undriven net, duplicate driver, combinational cycle, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A computation produced a non-finite or undefined result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Training diverged; `epoch` is the first epoch with a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// No candidate size met the accuracy threshold; the report lists every
    /// size that was tried with the error it achieved.
    #[error("architecture search failed: no size in {} candidates met the threshold", .report.rows.len())]
    SearchFailed { report: SearchReport },

    /// A resource budget (GPU cores, instance slots) cannot hold the request.
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
