//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by solvers, builders, loaders and the experiment runner.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem size {n} exceeds capacity {cap}")]
    Capacity { n: usize, cap: usize },
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("empty tally: no coordinates left after exclusion")]
    EmptyTally,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("solve failed at t = {t}, layer {layer}, column {column}: {source}")]
    Solve {
        t: u64,
        layer: usize,
        column: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("transport error after {attempts} attempt(s): {msg}")]
    Transport { attempts: u32, msg: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid configuration:\n  {}", .violations.join("\n  "))]
    Config { violations: Vec<String> },
}

pub type Result<T> = std::result::Result<T, Error>;
