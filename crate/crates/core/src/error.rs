use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {field}: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },

    #[error("pair index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("chain too large for the full-space oracle: N = {0} (limit 12)")]
    TooLarge(usize),

    /// A sector matrix is numerically singular. Signals a non-generic
    /// parameter point; callers decide whether to perturb or reject it.
    #[error("singular sector-{sector} matrix (condition estimate {condition:.3e})")]
    SingularSector { sector: u8, condition: f64 },

    #[error("no solution found after {restarts} restarts")]
    NoSolutionFound { restarts: usize },

    #[error("Gauss-Newton stalled after {iterations} iterations (residual {residual:.3e})")]
    StepFailed { iterations: usize, residual: f64 },

    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("histogram binning mismatch")]
    BinningMismatch,

    #[error("state norm vanishes")]
    ZeroState,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
