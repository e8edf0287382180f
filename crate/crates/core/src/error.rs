use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("duplicate surface form {0:?}")]
    DuplicateSurface(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no dissimilar concept available")]
    NoDissimilarConcept,

    #[error("no entity for local pair")]
    NoEntity,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("zero vector{}", .0.as_deref().map(|id| format!(" for {id:?}")).unwrap_or_default())]
    ZeroVector(Option<String>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("corrupt file at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("training diverged at step {step}; parameters restored to the last good checkpoint")]
    Diverged { step: usize },

    #[error("unknown id {0:?}")]
    UnknownId(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
