use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Inputs are structurally valid but violate an operation precondition
    /// (label out of range, target not one-hot, mismatched lengths, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// NaN or infinity reached an operation boundary.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Dataset or manifest validation failed.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint encoding/decoding failed.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training aborted because the loss became non-finite.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
