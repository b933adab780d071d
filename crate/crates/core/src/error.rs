use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, stencil, or parameter configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs that contradict each other (wrong node count, bad seed, ...).
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    /// A required precondition on a derived object does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("eigensolver did not converge: {0}")]
    Solver(String),

    /// A mapped state collapsed to (numerically) zero.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("state is not normalizable on the grid: {0}")]
    NonNormalizable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
