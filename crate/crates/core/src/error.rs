use std::fmt;

/// Errors raised anywhere in the crate.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not conform.
    Shape(String),
    /// A value left the finite range.
    NonFinite(String),
    /// Bad argument or configuration value.
    Invalid(String),
    /// Binary or JSON payload did not match the expected layout.
    Format(String),
    /// Differentiation misuse (non-scalar loss, empty graph, unknown parameter).
    Graph(String),
    /// The partitioned coupling loop failed to converge.
    Divergence { step: usize, residual: f64 },
    /// A moving mesh lost its node ordering.
    MeshInversion { step: usize, length: f64 },
    Io(std::io::Error),
    Json(serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape(msg) => write!(f, "dimension error: {msg}"),
            Self::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Self::Invalid(msg) => write!(f, "invalid argument: {msg}"),
            Self::Format(msg) => write!(f, "format error: {msg}"),
            Self::Graph(msg) => write!(f, "graph error: {msg}"),
            Self::Divergence { step, residual } => write!(
                f,
                "coupling iteration diverged at step {step} (residual {residual:e})"
            ),
            Self::MeshInversion { step, length } => {
                write!(f, "mesh inverted at step {step} (domain length {length})")
            }
            Self::Io(err) => write!(f, "i/o error: {err}"),
            Self::Json(err) => write!(f, "json error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(err) => Some(err),
            Self::Json(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Self::Json(err)
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::Invalid(format!($($arg)*)) };
}
pub(crate) use invalid;
pub(crate) use shape_err;
