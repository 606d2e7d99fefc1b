use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e}): {reason}")]
    Solver {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short tag, used by the CLI for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Geometry(_) => "geometry",
            Error::Format(_) => "format",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Solver { .. } => "solver",
            Error::Training(_) => "training",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Calibration(_) => "calibration",
            Error::Precondition(_) => "precondition",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
