use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    /// A loss or gradient became non-finite during a training step.
    #[error("training diverged at step {step}: loss = {loss}, gradient norm = {grad_norm}")]
    Diverged { step: u64, loss: f64, grad_norm: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("singular conditioning covariance for variables {i} and {j}")]
    DegenerateConditioning { i: usize, j: usize },

    #[error("column {0} is not present in the data")]
    MissingColumn(usize),

    #[error("edge {0} -> {1} would create a cycle")]
    Cycle(usize, usize),

    #[error("logarithm argument {0} is not greater than one")]
    NonPositiveLog(f64),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
