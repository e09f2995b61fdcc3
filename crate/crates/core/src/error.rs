use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is zero (below 1e-12)")]
    ZeroVector,

    #[error("dimension mismatch{}: expected {expected}, found {found}", .id.as_ref().map(|i| format!(" for '{i}'")).unwrap_or_default())]
    DimMismatch {
        expected: usize,
        found: usize,
        id: Option<String>,
    },

    #[error("line {0}: wrong number of fields")]
    MalformedLine(usize),

    #[error("line {0}: unknown trial label")]
    UnknownLabel(usize),

    #[error("line {line}: {msg}")]
    BadValue { line: usize, msg: String },

    #[error("bad magic bytes, expected SEMB")]
    BadMagic,

    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),

    #[error("duplicate embedding id '{0}'")]
    DuplicateId(String),

    #[error("truncated embedding record")]
    TruncatedRecord,

    #[error("embedding id is not valid UTF-8 or too long")]
    BadId,

    #[error("enrollment model '{model}' references missing utterance '{utt}'")]
    MissingUtterance { model: String, utt: String },

    #[error("missing embedding for '{0}'")]
    MissingEmbedding(String),

    #[error("invalid configuration field '{0}'")]
    ConfigInvalid(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("score sets disagree on trial ({enroll}, {test})")]
    KeyMismatch { enroll: String, test: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("no training examples for class '{0}'")]
    EmptyClass(&'static str),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("unsupported strategy: {0}")]
    UnsupportedStrategy(String),

    #[error("empty score list on the {0} side")]
    EmptySide(&'static str),

    #[error("trial ({enroll}, {test}) has no score")]
    MissingScore { enroll: String, test: String },

    #[error("score for ({enroll}, {test}) matches no trial")]
    OrphanScore { enroll: String, test: String },

    #[error("duplicate score for ({enroll}, {test})")]
    DuplicateScore { enroll: String, test: String },

    #[error("trial ({enroll}, {test}) has no label")]
    MissingLabel { enroll: String, test: String },

    #[error("degenerate t-DCF cost: C1={c1}, C2={c2}")]
    DegenerateCost { c1: f64, c2: f64 },

    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),

    #[error("configuration key '{key}': cannot parse '{value}'")]
    TypeError { key: String, value: String },

    #[error("{}: {source}", .path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping file-context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}
