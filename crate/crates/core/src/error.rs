use std::fmt;

/// Errors produced by construction, validation and the iterative solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar or structural argument is out of its admissible range.
    InvalidArgument(String),
    /// Two objects that must share a shape (mode count, cell count, piece
    /// count) do not.
    ShapeMismatch(String),
    /// An iterative solve ran out of iterations before reaching its
    /// tolerance. Carries a label of the failing solve and the last
    /// residual so callers can report both.
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    /// Relabel a nonconvergence error with the context it occurred in;
    /// other variants pass through unchanged.
    pub fn labeled(self, what: impl Into<String>) -> Error {
        match self {
            Error::NonConvergence {
                iterations,
                residual,
                ..
            } => Error::NonConvergence {
                what: what.into(),
                iterations,
                residual,
            },
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonConvergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} hit its iteration limit after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
