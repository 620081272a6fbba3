use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("probability {0} lies outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("state ({j1}, {j2}) lies outside the grid [0, {n1}] x [0, {n2}]")]
    StateOutOfRange { j1: usize, j2: usize, n1: usize, n2: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shapes differ: {0}x{1} nodes vs {2}x{3} nodes")]
    GridMismatch(usize, usize, usize, usize),

    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateCapExceeded { states: usize, cap: usize },

    #[error(
        "no absorption path: with kappa = 0 the patches never exchange, so mixed states such as \
         ({n1}, 0) cannot reach (0, 0) or ({n1}, {n2}) and expected hitting times are infinite"
    )]
    NoAbsorptionPath { n1: usize, n2: usize },

    #[error("linear solve did not reach tolerance: residual {residual:e} > {tolerance:e} ({context})")]
    SolveFailed { residual: f64, tolerance: f64, context: String },

    #[error("M-matrix certificate violated: {0}")]
    MMatrixViolation(String),

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
