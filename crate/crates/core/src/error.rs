use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("missing dual for row {0}")]
    MissingDual(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit reached after {0} iterations")]
    IterationLimit(usize),
    #[error("perturbed problem infeasible at h = {0}")]
    InfeasiblePerturbation(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
