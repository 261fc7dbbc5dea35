//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A selection matrix violates its binary/relaxed invariants.
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    /// A covariance matrix is not Hermitian positive semidefinite.
    #[error("covariance is not Hermitian PSD: {0}")]
    NotPsd(String),
    /// Dense materialization was requested beyond the size guard.
    #[error("dense materialization refused: 2MN = {0} exceeds {1}")]
    TooLarge(usize, usize),
    /// The conic solver reported a problem it could not handle.
    #[error("solver failure: {0}")]
    Solver(String),
    /// An eigen or Cholesky factorization failed.
    #[error("factorization failure: {0}")]
    Factorization(String),
    /// A constraint set admits no point.
    #[error("infeasible at {stage} (outer iteration {iteration})")]
    Infeasible {
        /// Which update reported infeasibility.
        stage: String,
        /// Outer iteration index (0 = initialization).
        iteration: usize,
    },
    /// Too few Monte Carlo trials for the requested false-alarm resolution.
    #[error("insufficient trials: {needed} needed, {given} given")]
    InsufficientTrials {
        /// Minimum trial count.
        needed: usize,
        /// Requested trial count.
        given: usize,
    },
    /// Exhaustive search would exceed its enumeration budget.
    #[error("enumeration budget exceeded: {0} pairs")]
    Budget(u64),
    /// Scenario configuration problem, with the offending field path.
    #[error("config error at `{path}`: {message}")]
    Config {
        /// Dotted path to the offending field.
        path: String,
        /// Human-readable reason.
        message: String,
    },
    /// I/O failure while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// CSV writing failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
