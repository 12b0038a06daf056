use thiserror::Error;

/// Errors raised by the orbit pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("state is a simultaneous binary collision; momenta are undefined")]
    SbcPoint,

    #[error("vector field undefined at s = {s}: {reason}")]
    SingularityHit { s: f64, reason: String },

    #[error("step limit of {0} reached before the end of the span")]
    StepLimit(usize),

    #[error("step size underflow at s = {0}")]
    StepUnderflow(f64),

    #[error("no event found before s = {0}")]
    NoEvent(f64),

    #[error("root bracket [{lo}, {hi}] does not change sign")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("segment boundary mismatch: {0}")]
    BoundaryMismatch(String),

    #[error("minimizer failed: {0}")]
    Minimizer(String),

    #[error("energy tuning failed: {0}")]
    EnergyTuning(String),

    #[error("term escalation not possible: {0}")]
    Escalation(String),

    #[error("sweep could not start from the seed orbit: {0}")]
    SeedFailure(String),

    #[error("eigenvalue iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
