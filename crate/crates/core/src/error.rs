use thiserror::Error;

/// Errors surfaced by the numeric kernels and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry encountered")]
    NonFinite,

    #[error("eigensolver failed to converge at index {0}")]
    EigenNoConvergence(usize),

    #[error("matrix is rank deficient (column {0})")]
    RankDeficient(usize),

    #[error("eigenvalue {value} below tolerance {tol}")]
    NegativeEigenvalue { value: f64, tol: f64 },

    #[error("matrix is numerically singular (eigenvalue {0})")]
    Singular(f64),

    #[error("sample count {got} too small (need at least {need})")]
    SampleTooSmall { need: usize, got: usize },

    #[error("requested delay {requested} exceeds buffered history {available}")]
    DelayExceedsBuffer { requested: usize, available: usize },

    #[error("eigenvalue update would go negative (index {index}, value {value}); shrink the step")]
    StepRejected { index: usize, value: f64 },

    #[error("invalid user index {index} for {users} users")]
    InvalidUser { index: usize, users: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("scenario field `{field}`: {reason}")]
    Scenario { field: &'static str, reason: String },

    #[error("scenario parse error: {0}")]
    ScenarioParse(String),

    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn scenario(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Scenario {
            field,
            reason: reason.into(),
        }
    }
}
