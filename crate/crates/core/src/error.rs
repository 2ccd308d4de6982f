use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The problem or case is structurally invalid.
    #[error("build error: {0}")]
    Build(String),

    /// Case-file validation failure, `path` names the offending field.
    #[error("{path}: {message}")]
    Case { path: String, message: String },

    #[error("unsupported formulation: {0}")]
    Unsupported(String),

    #[error("case kind {kind} incompatible with model {model}")]
    IncompatibleModel { kind: String, model: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn build(msg: impl Into<String>) -> Self {
        Error::Build(msg.into())
    }

    pub(crate) fn case(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Case {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
