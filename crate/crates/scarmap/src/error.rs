use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// Fire scar too large for the F128 crop window.
    #[error("oversize scar: {0}")]
    Oversize(String),

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(String),

    #[error("checkpoint does not match requested config: {0}")]
    ConfigMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
