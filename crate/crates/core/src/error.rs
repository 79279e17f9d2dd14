use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error("{context}: line {line}: {message}")]
    Malformed {
        context: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty abstract")]
    EmptyAbstract,

    #[error("empty concept")]
    EmptyConcept,

    #[error("too few records: need at least {required}, got {available}")]
    InsufficientRecords { required: usize, available: usize },

    #[error("dimension mismatch: embedding has {embedding} columns, head expects {head}")]
    DimensionMismatch { embedding: usize, head: usize },

    #[error("length mismatch: {what} has {left}, expected {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged; last finite loss {last_finite_loss}")]
    Diverged { last_finite_loss: f64 },

    #[error("degenerate labels: training data needs both keep and drop examples")]
    DegenerateLabels,

    #[error("no splits: every tree is a single leaf")]
    NoSplits,

    #[error("forest is untrained")]
    Untrained,

    #[error("candidate ({start}, {end}) is not in the candidate list")]
    CandidateNotFound { start: usize, end: usize },

    #[error("missing judgment for entity {entity_id:?}, concept {concept:?}")]
    MissingJudgment { entity_id: String, concept: String },

    #[error("pattern {id}: {message}")]
    Pattern { id: String, message: String },

    #[error("seed conflict: {artifact} was produced with seed {recorded}, run uses seed {requested}")]
    SeedConflict {
        artifact: String,
        recorded: u64,
        requested: u64,
    },

    #[error("unknown entity {0:?}")]
    UnknownEntity(String),

    #[error("unknown task {0:?}")]
    UnknownTask(String),
}

/// Coarse classes used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    MissingInput,
    Schema,
    Config,
    SeedConflict,
    Data,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::MissingInput(_) => ErrorClass::MissingInput,
            Error::Malformed { .. } | Error::Pattern { .. } => ErrorClass::Schema,
            Error::Config(_) | Error::DimensionMismatch { .. } => ErrorClass::Config,
            Error::SeedConflict { .. } => ErrorClass::SeedConflict,
            _ => ErrorClass::Data,
        }
    }
}
