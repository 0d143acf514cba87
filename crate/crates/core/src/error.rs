use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite coefficient {what} at t={t}, r={r}")]
    NonFiniteCoefficient { what: &'static str, t: f64, r: f64 },

    #[error("negative diffusion a={a} at t={t}, r={r}")]
    NegativeDiffusion { a: f64, t: f64, r: f64 },

    #[error("degenerate sampling box: {0}")]
    DegenerateBox(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not match grid: expected {expected} values, got {got}")]
    FieldMismatch { expected: usize, got: usize },

    #[error("non-finite field value at cell {0}")]
    NonFiniteField(usize),

    #[error("solver diverged after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("step {lambda} exceeds half of lambda_zero = {lambda_zero}")]
    StepTooLarge { lambda: f64, lambda_zero: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("particle {index} left the box at x={position}")]
    ParticleEscaped { index: usize, position: f64 },

    #[error("test function support touches the boundary: {0}")]
    TestFunctionNotSupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
