//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed coefficient expression (parse stage).
    #[error("expression parse error: {0}")]
    ExprParse(String),

    /// Expression evaluation left its domain (log of a nonpositive value,
    /// division by zero, ...) at the given point.
    #[error("expression domain error at ({x}, {y}): {reason}")]
    ExprDomain { x: f64, y: f64, reason: String },

    /// Invalid geometry input (self-intersecting polygon, empty arc, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Mesh generation or validation failure.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Scenario violates an admissibility condition.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Linear solver breakdown (non-SPD system, singular factor, ...).
    #[error("solver error: {0}")]
    Solver(String),

    /// Boundary data handed to the measurement oracle is not supported on
    /// the accessible arc.
    #[error("oracle rejected boundary data: {0}")]
    OracleSupport(String),

    /// A least-squares recovery is too ill-conditioned to continue.
    #[error("ill-conditioned recovery: {0}")]
    Conditioning(String),

    /// Configuration file problem.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid argument to a numerical routine.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
