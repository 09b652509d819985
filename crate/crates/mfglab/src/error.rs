use thiserror::Error;

/// Errors surfaced by the solver suite.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid too small: {n_cells} cells, need at least {min}")]
    GridTooSmall { n_cells: usize, min: usize },

    #[error("invalid L^m exponent m = {m}, need m >= 1")]
    InvalidExponent { m: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Lagrangian evaluated to a non-finite value at (t={t}, x={x}, u={u})")]
    LagrangianEvaluation { t: f64, x: f64, u: f64 },

    #[error("convexity violation: {0}")]
    ConvexityViolation(String),

    #[error("ellipticity violation: a(t={t}, x={x}) = {value} < gamma = {gamma}")]
    Ellipticity { t: f64, x: f64, value: f64, gamma: f64 },

    #[error("negative density at cell {index}: {value}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("control value {value} outside the ball of radius {radius}")]
    ControlOutOfBall { value: f64, radius: f64 },

    #[error("linear solver failure: {0}")]
    SolverFailure(String),

    #[error("fixed-point iteration diverged after {iterations} iterations (last residual {last_residual})")]
    Divergence { iterations: usize, last_residual: f64 },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config validation failed for key `{key}`: {constraint}")]
    ConfigValidation { key: String, constraint: String },

    #[error("non-finite field value produced by {context}")]
    NonFinite { context: &'static str },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
