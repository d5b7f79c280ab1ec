use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or invalid input data.
    Data,
    /// A numerical routine failed on otherwise valid input.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive value {value} for gene '{gene}', array '{array}'")]
    NonPositiveValue {
        gene: String,
        array: String,
        value: f64,
    },
    #[error("non-finite value for gene '{gene}', array '{array}'")]
    NonFiniteValue { gene: String, array: String },
    #[error("duplicate identifier '{0}'")]
    DuplicateId(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pattern has {found} codes, expected {expected}")]
    WrongArity { expected: usize, found: usize },
    #[error("pattern code '{0}' is not a nonnegative integer")]
    NonIntegerCode(String),
    #[error("invalid group assignment: {0}")]
    InvalidGroups(String),
    #[error("first pattern must be the null pattern (all groups equal)")]
    FirstPatternNotNull,
    #[error("pattern {0} duplicates an earlier pattern")]
    DuplicatePattern(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("density evaluated outside its support at y = {0}")]
    DomainError(f64),
    #[error("gamma approximation is degenerate (shape = {shape})")]
    ApproxDegenerate { shape: f64 },
    #[error("mode refinement failed: {0}")]
    RefineFailed(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("integrability constraint violated (c + sum a log(s/a) = {0})")]
    IntegrabilityViolation(f64),
    #[error("posterior mean of the expression level is undefined for this draw")]
    MomentUndefined,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("objective is not finite")]
    NonFiniteObjective,
    #[error("every cluster falls below the pruning threshold")]
    AllClustersPruned,
    #[error("group {0} has no arrays")]
    GroupEmpty(usize),
    #[error("no truly differentially expressed genes; power is undefined")]
    NoTrueDe,
    #[error("too few replicates: {0}")]
    TooFewReplicates(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("array '{0}' is not present in the expression matrix")]
    UnknownArray(String),
    #[error("array '{0}' has no group label")]
    MissingArray(String),
    #[error("array '{0}' is listed more than once")]
    DuplicateArray(String),
    #[error("unsupported fit file: {0}")]
    FitFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            DomainError(_)
            | ApproxDegenerate { .. }
            | RefineFailed(_)
            | QuadratureNonConvergence(_)
            | IntegrabilityViolation(_)
            | MomentUndefined
            | NonFiniteObjective
            | AllClustersPruned => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
