use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undeclared parameter `{name}` at line {line}, column {col}")]
    UndeclaredParameter { name: String, line: usize, col: usize },
    #[error("dimension mismatch at line {line}, column {col}: {msg}")]
    DimensionMismatch { line: usize, col: usize, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point {0:?} lies outside the chart")]
    OutOfChart(Vec<f64>),
    #[error("vector is not horizontal (contact form = {0:e})")]
    NonHorizontal(f64),
    #[error("base points differ")]
    BaseMismatch,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("not an immersion at {at:?}: smallest singular value {sigma:e}")]
    NotImmersed { at: Vec<f64>, sigma: f64 },
    #[error("singular point at {at:?}: contact intersection has the wrong dimension")]
    SingularPoint { at: Vec<f64> },
    #[error("contact intersection is not J-invariant at {at:?} (residual {residual:e})")]
    NotCRInvariant { at: Vec<f64>, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("ill-conditioned coframe at {at:?} (condition {cond:e})")]
    IllConditionedCoframe { at: Vec<f64>, cond: f64 },
    #[error("degenerate point at {at:?}: no curvature pivot above threshold")]
    DegeneratePoint { at: Vec<f64> },
    #[error("wrong verticality class: expected {expected}, found {found}")]
    WrongClass { expected: String, found: String },
    #[error("second fundamental form does not vanish (max {0:e})")]
    NotFlat(f64),
    #[error("torsion does not vanish (max {0:e})")]
    NotTorsionFree(f64),
    #[error("integrability failure: holonomy {holonomy:e} exceeds threshold {threshold:e}")]
    IntegrabilityFailure { holonomy: f64, threshold: f64 },
    #[error("projection drift {0:e} exceeds bound")]
    ProjectionDrift(f64),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("bad builtin parameters: {0}")]
    BadParameters(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by malformed input rather than by a failed geometric verdict.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::WrongClass { .. }
                | Error::NotFlat(_)
                | Error::NotTorsionFree(_)
                | Error::IntegrabilityFailure { .. }
                | Error::ProjectionDrift(_)
                | Error::DegeneratePoint { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
