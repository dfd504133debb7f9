use thiserror::Error;

/// Errors raised by the solvers, oracles and I/O layer.
#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain extends outside the box: {0}")]
    OutsideBox(String),

    #[error("empty domain")]
    EmptyDomain,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("direct summation refused: {cells} cells exceeds cap of {cap}")]
    CapExceeded { cells: usize, cap: usize },

    #[error("padded transform needs {required} complex values, which cannot be allocated")]
    Resource { required: usize },

    #[error("step size fell below {tau_min} without energy decrease")]
    StepCollapse { tau_min: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ScreenError>;
