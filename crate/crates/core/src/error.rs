use std::path::PathBuf;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown dataset format `{0}` (expected csv or jsonl)")]
    UnknownFormat(String),

    #[error("class {class} has {count} < {needed} single-label records")]
    InsufficientClass {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label id {id} out of range for {n_classes} classes")]
    LabelOutOfRange { id: usize, n_classes: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupted checkpoint: {0}")]
    Corrupted(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
