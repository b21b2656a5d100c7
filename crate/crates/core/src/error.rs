use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the grid, solvers, scheme drivers and tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {got} values but the grid has {expected} nodes")]
    GridMismatch { expected: usize, got: usize },

    #[error("operation requires a boundary condition, field has none")]
    MissingBoundaryCondition,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient must be strictly positive, minimum is {min}")]
    CoefficientNotPositive { min: f64 },

    #[error("Neumann compatibility violated: integral of source is {integral:e} (tolerance {tol:e})")]
    SolvabilityViolation { integral: f64, tol: f64 },

    #[error("singular linear system at pivot {0}")]
    SingularSystem(usize),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (update {update:e})")]
    PicardDiverged { iterations: usize, update: f64 },

    #[error("time step failed at t = {t} after {halvings} halvings: {reason}")]
    StepFailed { t: f64, halvings: u32, reason: String },

    #[error("negative density value {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },

    #[error("nonpositive value {value} at node {node}")]
    NonPositive { node: usize, value: f64 },

    #[error("delta = {delta} too large for d = {d}: no admissible c0")]
    DeltaTooLarge { d: usize, delta: f64 },

    #[error("ratio is degenerate for a constant field")]
    DegenerateRatio,

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
