use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },

    #[error("step index {index} out of range for trajectory with {len} steps")]
    Index { index: usize, len: usize },

    #[error("argument nesting at {path} exceeds max depth {max_depth}")]
    Depth { path: String, max_depth: usize },

    #[error("value at {path} cannot be serialized: {reason}")]
    NonSerializable { path: String, reason: String },

    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("non-finite component at position {0}")]
    NonFinite(usize),

    #[error("encoder error{}: {message}", context_suffix(.context))]
    Encoder { context: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corpus contains no scorable samples")]
    EmptyCorpus,

    #[error("reference trajectory has no calls")]
    EmptyReference,

    #[error("template `{template}` requires placeholder `{placeholder}`")]
    MissingPlaceholder { template: String, placeholder: String },

    #[error("no parsable \\boxed{{..}} score in response: {excerpt:?}")]
    NoScore { excerpt: String },

    #[error("expected exactly {expected} scores, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("call log contains no entries")]
    EmptyLog,

    #[error("judge `{judge_id}` failed: {message}")]
    Judge { judge_id: String, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unpaired files: {}", .0.join(", "))]
    Unpaired(Vec<String>),

    #[error("{}: {source}", .path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("sample `{id}`: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    /// Stable machine-readable code used in CLI error records and FFI status mapping.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "SchemaError",
            Error::Invariant { .. } => "InvariantError",
            Error::Index { .. } => "IndexError",
            Error::Depth { .. } => "DepthError",
            Error::NonSerializable { .. } => "NonSerializableError",
            Error::ZeroNorm => "ZeroNormError",
            Error::DimMismatch { .. } => "DimMismatchError",
            Error::NonFinite(_) => "NonFiniteError",
            Error::Encoder { .. } => "EncoderError",
            Error::Config(_) => "ConfigError",
            Error::EmptyCorpus => "EmptyCorpusError",
            Error::EmptyReference => "EmptyReferenceError",
            Error::MissingPlaceholder { .. } => "MissingPlaceholderError",
            Error::NoScore { .. } => "NoScoreError",
            Error::Arity { .. } => "ArityError",
            Error::Shape(_) => "ShapeError",
            Error::EmptyLog => "EmptyLogError",
            Error::Judge { .. } => "JudgeError",
            Error::Io { .. } => "IoError",
            Error::Unpaired(_) => "UnpairedError",
            Error::Sample { source, .. } | Error::InFile { source, .. } => source.code(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_sample(self, id: &str) -> Self {
        Error::Sample {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
