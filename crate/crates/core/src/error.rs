use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed matrix file (line {line}): {msg}")]
    Parse { line: usize, msg: String },

    #[error(
        "instance generation failed after {attempts} resamples for rho={rho}, M={rows}, N={cols}, K={rank}"
    )]
    Generation {
        rho: f64,
        rows: usize,
        cols: usize,
        rank: usize,
        attempts: usize,
    },

    #[error("empty matrix after filtering")]
    EmptyMatrix,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
