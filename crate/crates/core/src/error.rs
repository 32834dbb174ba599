use thiserror::Error;

/// Errors raised by the certification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("basis is not orthonormal: Gram entry ({row}, {col}) deviates by {deviation:.3e}")]
    NotOrthonormal { row: usize, col: usize, deviation: f64 },

    #[error("program assembly failed: {0}")]
    Assembly(String),

    #[error("solver did not produce a usable solution: {0}")]
    Solver(String),

    #[error("protocol extraction failed: {0}")]
    Extraction(String),

    #[error("experiment record is missing setting pairs {missing:?}")]
    IncompleteData { missing: Vec<(usize, usize)> },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("unsupported hierarchy level {0}; only level 1 is implemented")]
    UnsupportedLevel(u32),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
