use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("configuration mismatch: {0}")]
    Config(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("gamma = {gamma} is below the certified minimum {gamma_min}")]
    InfeasibleGamma { gamma: f64, gamma_min: f64 },

    #[error("gamma bound is degenerate: denominator {0} is not positive")]
    DegenerateBound(f64),

    #[error("state matrix is not Hurwitz (largest real part {0})")]
    UnstableSystem(f64),

    #[error("middle block -gamma I + D^T D / gamma is singular")]
    SingularMiddleBlock,

    #[error("empty input")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, Error>;
