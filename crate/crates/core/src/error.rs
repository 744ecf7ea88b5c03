use std::path::PathBuf;

/// Errors raised anywhere in the re-identification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("resolution mismatch in view {view}: expected {expected:?}, found {found:?} ({path})")]
    ResolutionMismatch {
        view: u8,
        expected: (usize, usize),
        found: (usize, usize),
        path: PathBuf,
    },
    #[error("patch size {patch} does not fit a {width}x{height} image")]
    PatchTooLarge {
        patch: usize,
        width: usize,
        height: usize,
    },
    #[error("need at least {needed} distinct samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entity has no images")]
    EmptyEntity,
    #[error("index ({0}, {1}) out of range")]
    IndexOutOfRange(usize, usize),
    #[error("non-finite similarity score at ({0}, {1})")]
    NonFiniteScore(usize, usize),
    #[error("infeasible matching specification: {0}")]
    InfeasibleSpec(String),
    #[error("no descriptor for ground-truth pair ({0}, {1})")]
    MissingDescriptor(usize, usize),
    #[error("solver did not converge: {0}")]
    Divergence(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFiniteScore(..) | Error::InfeasibleSpec(_) | Error::Divergence(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
