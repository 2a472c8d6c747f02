use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension {0} is too small; at least 2 coordinates are required")]
    DimensionTooSmall(usize),
    #[error("entry {index} has negative mass {value}")]
    NegativeMass { index: usize, value: f64 },
    #[error("entry {0} is not finite")]
    NonFinite(usize),
    #[error("entries sum to zero")]
    ZeroTotal,
    #[error("invalid Dirichlet parameter: {0}")]
    InvalidParam(String),
    #[error("base point has a zero entry at index {0}")]
    ZeroEntry(usize),
    #[error("margin {0} must exceed 1")]
    BadMargin(f64),
    #[error("no valid eta for block {block}: right-hand side {rhs} is not positive")]
    InfeasibleEta { block: usize, rhs: f64 },
    #[error("operation requires a {expected} mixture")]
    WrongKind { expected: &'static str },
    #[error("perturbation size {0} must lie in (0, 1)")]
    InvalidC(f64),
    #[error("count `{name}` must be at least {min}, got {got}")]
    InvalidCount { name: &'static str, min: usize, got: usize },
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("oracle does not accept points off the simplex")]
    OffSimplexUnsupported,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("linear program failed: {0}")]
    LpNumericalFailure(String),
    #[error("bisection failed: {0}")]
    BisectionFailure(String),
    #[error("iterate has a non-positive entry at index {0}")]
    NonPositiveIterate(usize),
    #[error("q has mass at index {0} where p is zero")]
    SupportViolation(usize),
    #[error("iterate collapsed onto the simplex boundary (min entry {0:e})")]
    BoundaryCollapse(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient points for a fit: need at least {need}, got {got}")]
    InsufficientPoints { need: usize, got: usize },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
