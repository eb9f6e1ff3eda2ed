use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped loosely by where they originate; the CLI maps
/// data-related variants (I/O, malformed input, empty inputs) to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("all authors were filtered out (fewer than {min_chunks} training chunks each)")]
    AllAuthorsFiltered { min_chunks: usize },

    #[error("unknown author `{0}`")]
    UnknownAuthor(String),

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence too short: length {len} < kernel {kernel}")]
    SequenceTooShort { len: usize, kernel: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loss is not a scalar (shape {0:?})")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("round for `{author}` failed: {source}")]
    Round {
        author: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        if let Error::Round { source, .. } = self {
            return source.is_data_error();
        }
        matches!(
            self,
            Error::EmptyCorpus
                | Error::EmptyFile { .. }
                | Error::Malformed { .. }
                | Error::Io { .. }
                | Error::AllAuthorsFiltered { .. }
                | Error::UnknownAuthor(_)
                | Error::SingleClass
                | Error::Checkpoint(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
