use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("node ({k}, {l}) is outside the {n1}x{n2} unit-square mesh")]
    NodeOutOfRange { k: i64, l: i64, n1: usize, n2: usize },

    #[error("grid function has {got} values, domain expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("grid functions live on different domains")]
    DomainMismatch,

    #[error("operator requires a {expected} domain")]
    WrongDomainKind { expected: &'static str },

    #[error("node ({k}, {l}) lies on the boundary; use c_h or i_h on the unit square")]
    BoundaryNode { k: i64, l: i64 },

    #[error("malformed input field: {0}")]
    MalformedInput(String),

    #[error("unsupported L^p exponent {0}; expected 1, 2 or infinity")]
    UnsupportedNorm(String),

    #[error("quadrature order must be at least {min}, got {got}")]
    QuadOrder { min: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Pgm { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
