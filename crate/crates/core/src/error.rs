use thiserror::Error;

/// Errors produced by the library. Infinite costs and leakages are values,
/// not errors; see [`crate::prob::kl`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("posterior undefined: output symbol {z} has p_Z > 0 but the adversary assigns it zero mass")]
    UndefinedPosterior { z: usize },

    #[error("information leakage is ill-defined: adversary marginal p̂_X({x}) = 0")]
    IllDefinedLeakage { x: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("gradient diverges at ({y}, {z})")]
    DivergentGradient { y: usize, z: usize },

    #[error("initial channel is infeasible: {0}")]
    InfeasibleInit(String),

    #[error("inner solver failed: {0}")]
    InnerSolverFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
