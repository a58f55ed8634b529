use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies outside the closure of the domain (distance check failed by {excess:e})")]
    OutsideDomain { excess: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("rejection sampler gave up after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("singular Green's function draw (rho = {rho:e}, r = {r:e})")]
    SingularDraw { rho: f64, r: f64 },

    #[error("rho = {rho} exceeds the ball radius r = {r}")]
    RadiusOutOfRange { rho: f64, r: f64 },

    #[error("a walk was truncated but no terminal model was supplied")]
    MissingTerminalModel,

    #[error("walk still active after {steps} steps")]
    WalkDiverged { steps: usize },

    #[error("problem `{0}` has no analytic solution")]
    MissingSolution(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("expression error at byte {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
