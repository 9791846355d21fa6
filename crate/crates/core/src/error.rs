use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (residual {residual:.3e} exceeds {tol:.3e})")]
    HermiticityViolation { residual: f64, tol: f64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("time {t} outside of horizon [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("degenerate pair: |trace| = {trace:.3e} below floor")]
    DegeneratePair { trace: f64 },

    #[error("step too large: dt * total rate = {value:.3e} exceeds {limit}; reduce dt")]
    StepSize { value: f64, limit: f64 },

    #[error("trajectory died: both pair vectors vanished after a jump")]
    TrajectoryDeath,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("integration blew up at t = {t} (max entry {magnitude:.3e}); reduce dt")]
    Blowup { t: f64, magnitude: f64 },

    #[error("basis truncation: {0}")]
    Truncation(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("too many restarts ({0}) for a single trajectory")]
    RestartLimit(u32),
}
