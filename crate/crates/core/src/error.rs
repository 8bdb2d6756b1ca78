use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: {detail}")]
    Shape {
        context: &'static str,
        detail: String,
    },

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward called before forward on {0}")]
    BackwardBeforeForward(&'static str),

    #[error("training corpus contains a non-good sample `{id}` ({category}); autoencoders train on good welds only")]
    AnomalousTrainingData { id: String, category: String },

    #[error("both classes are required, got {positives} defect and {negatives} good samples")]
    SingleClass { positives: usize, negatives: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Data(String),

    #[error("{path}:{line}: field `{field}`: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("unknown weld category `{0}`")]
    UnknownCategory(String),

    #[error("malformed {format} file: {detail}")]
    Format {
        format: &'static str,
        detail: String,
    },

    #[error(
        "ring buffer overrun: {pending} buffered + {incoming} incoming exceeds capacity {capacity}"
    )]
    Overrun {
        capacity: usize,
        pending: usize,
        incoming: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            context,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NonFinite(_) => ErrorKind::Numeric,
            Error::Io { .. } => ErrorKind::Io,
            Error::Wav(hound::Error::IoError(_)) => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}
