use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("point lies in the excluded cap around the pole (distance {0:e})")]
    SingularChart(f64),
    #[error("kernel evaluated at its singular point")]
    SingularKernel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("Gram matrix singular while orthonormalizing block ({j},{l})")]
    SingularGram { j: usize, l: usize },
    #[error("symmetry mask is empty at truncation jmax={jmax}")]
    EmptyMask { jmax: usize },
    #[error("matrix is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("zero input")]
    ZeroInput,
    #[error("line search failed: {0}")]
    LineSearch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
