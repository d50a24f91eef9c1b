use thiserror::Error;

/// Errors raised by the lattice laboratory.
///
/// Every variant carries a stable machine-readable reason via [`Error::reason`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degree is not an integer: raw value {raw}")]
    NotInteger { raw: f64 },
    #[error("time step {dt} exceeds the stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("field blow-up at t = {t}: {what}")]
    Blowup { t: f64, what: String },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("maximal weight undetermined: neither plateau nor blow-up by t = {t_max}")]
    Undetermined { t_max: f64 },
    #[error("non-positive metric input at index {index}")]
    NonPositiveInput { index: usize },
    #[error("mismatched series: {0}")]
    MismatchedSeries(String),
    #[error("inconclusive run: {0}")]
    InconclusiveRun(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("snapshot parse error at line {line}: {msg}")]
    Snapshot { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NotInteger { .. } => "degree_not_integer",
            Error::CflViolation { .. } => "cfl_violation",
            Error::Blowup { .. } => "blowup",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Undetermined { .. } => "undetermined",
            Error::NonPositiveInput { .. } => "non_positive_input",
            Error::MismatchedSeries(_) => "mismatched_series",
            Error::InconclusiveRun(_) => "inconclusive_run",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Snapshot { .. } => "snapshot_parse",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. }
                | Error::Blowup { .. }
                | Error::NonConvergence { .. }
                | Error::Undetermined { .. }
                | Error::NotInteger { .. }
                | Error::InconclusiveRun(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
