//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the harness.
#[derive(Debug, Error)]
pub enum Error {
    // --- corpus ---
    #[error("topic file not found: {0}")]
    TopicFileMissing(PathBuf),
    #[error("empty topic set: {0}")]
    EmptyTopicSet(PathBuf),
    #[error("malformed topic record at {path}:{line}: {reason}")]
    MalformedTopicRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate topic id {0}")]
    DuplicateTopicId(u64),

    // --- prompt ---
    #[error("template body must contain the [KEYWORDS] placeholder exactly once (found {0})")]
    BadPlaceholderCount(usize),
    #[error("empty label after parsing response")]
    EmptyAfterParse,
    #[error("empty label after normalization of {0:?}")]
    EmptyAfterNormalize(String),

    // --- gateway ---
    #[error("backend {backend_id}: authentication failed: {reason}")]
    AuthFailure { backend_id: String, reason: String },
    #[error("backend {backend_id}: retries exhausted after {attempts} attempts: {last_error}")]
    RetriesExhausted {
        backend_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("backend {backend_id}: malformed response: {reason}")]
    MalformedResponse { backend_id: String, reason: String },
    #[error("backend {backend_id}: missing API key environment variable {var}")]
    MissingApiKey { backend_id: String, var: String },
    #[error("unknown backend id in records: {0}")]
    UnknownBackend(String),

    // --- runner / store ---
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("run directory not found: {0}")]
    RunDirMissing(PathBuf),
    #[error("config snapshot missing in {0}")]
    SnapshotMissing(PathBuf),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("corrupt run store: {0}")]
    CorruptStore(String),

    // --- embeddings / similarity ---
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("cannot embed empty text")]
    EmptyEmbedText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("group has fewer than 2 labels ({0})")]
    GroupTooSmall(usize),
    #[error("empty label group")]
    EmptyGroup,

    // --- metrics ---
    #[error("no records for group {0}")]
    NoRecordsForGroup(String),
    #[error("empty sample list")]
    EmptySamples,

    // --- annotations ---
    #[error("malformed annotation row {line}: {reason}")]
    MalformedAnnotation { line: usize, reason: String },
    #[error("duplicate annotation for {0}")]
    DuplicateAnnotation(String),
    #[error("annotation session already active (lock file {0} exists)")]
    SessionLocked(PathBuf),
    #[error("non-interactive environment and no input file given")]
    NotInteractive,

    // --- report ---
    #[error("no output formats requested")]
    NoFormats,

    // --- plumbing ---
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(String),
    #[error("http error: {0}")]
    Http(String),
}

impl Error {
    /// Attach a path to a raw io error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, flags, missing
    /// files) as opposed to runtime failures. The CLI maps these to exit 1
    /// and everything else to exit 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::TopicFileMissing(_)
                | Error::EmptyTopicSet(_)
                | Error::MalformedTopicRecord { .. }
                | Error::DuplicateTopicId(_)
                | Error::BadPlaceholderCount(_)
                | Error::InvalidConfig(_)
                | Error::RunDirMissing(_)
                | Error::SnapshotMissing(_)
                | Error::ConfigMismatch(_)
                | Error::MissingApiKey { .. }
                | Error::MalformedAnnotation { .. }
                | Error::DuplicateAnnotation(_)
                | Error::NotInteractive
                | Error::NoFormats
                | Error::Toml(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
