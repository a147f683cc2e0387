use thiserror::Error;

/// Errors raised by chain construction, the eigensolver and the analyses built on top.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty spectral gap: s1 = {s1} must be smaller than s2 = {s2}")]
    EmptyGap { s1: f64, s2: f64 },

    #[error("negative eigenvalue {0} of a capacitance matrix")]
    NegativeEigenvalue(f64),

    #[error("inverse iteration did not converge for lambda = {lambda} (residual {residual:e} after {iterations} iterations)")]
    SolverFailure {
        lambda: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("dense oracle limited to n <= {max}, got n = {n}")]
    OracleSize { n: usize, max: usize },

    #[error("{0} is not an eigenvalue (degenerate analytic eigenvector)")]
    NotAnEigenvalue(f64),

    #[error("value outside the domain of the gap formulas: {0}")]
    Domain(String),

    #[error("insufficient data for decay fit: {usable} usable points, need at least 4")]
    InsufficientData { usable: usize },

    #[error("theory violation: {0}")]
    TheoryViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Machine-readable category name, used by the CLI error object.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) | Error::InvalidInput(_) => "invalid-geometry",
            Error::EmptyGap { .. } => "empty-gap",
            Error::NegativeEigenvalue(_)
            | Error::SolverFailure { .. }
            | Error::OracleSize { .. }
            | Error::NotAnEigenvalue(_)
            | Error::Domain(_)
            | Error::InsufficientData { .. }
            | Error::TheoryViolation(_) => "solver-failure",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "invalid-geometry" => 2,
            "empty-gap" => 3,
            "solver-failure" => 4,
            _ => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
