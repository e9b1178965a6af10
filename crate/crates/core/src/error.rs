use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("dimension mismatch{}: expected {expected}, got {actual}", at_row(*.row))]
    Dimension {
        expected: usize,
        actual: usize,
        row: Option<usize>,
    },

    #[error("synthetic spec is empty: {0}")]
    EmptySpec(&'static str),

    #[error("insufficient pairs: requested {requested} {kind} pairs, only {available} available")]
    InsufficientPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("selection stalled after {achieved} of {target} subsets: no feasible candidate")]
    SelectionStalled { achieved: usize, target: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(&'static str),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract state error: {0}")]
    State(&'static str),

    #[error("user {0} already has a template")]
    Duplicate(u64),

    #[error("user {0} not found")]
    NotFound(u64),

    #[error("empty template payload")]
    EmptyPayload,

    #[error("malformed proof: {0}")]
    Proof(String),

    #[error("off-chain data unavailable for user {user}")]
    Unavailable { user: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

fn at_row(row: Option<usize>) -> String {
    row.map(|r| format!(" at row {r}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn dim(expected: usize, actual: usize) -> Self {
        Error::Dimension {
            expected,
            actual,
            row: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::EmptySpec(_) => "E_EMPTY_SPEC",
            Error::InsufficientPairs { .. } => "E_INSUFFICIENT_PAIRS",
            Error::Range(_) => "E_RANGE",
            Error::InsufficientData { .. } => "E_INSUFFICIENT_DATA",
            Error::Config(_) => "E_CONFIG",
            Error::SelectionStalled { .. } => "E_SELECTION_STALLED",
            Error::Domain(_) => "E_DOMAIN",
            Error::Overflow(_) => "E_OVERFLOW",
            Error::Protocol(_) => "E_PROTOCOL",
            Error::State(_) => "E_STATE",
            Error::Duplicate(_) => "E_DUPLICATE",
            Error::NotFound(_) => "E_NOT_FOUND",
            Error::EmptyPayload => "E_PAYLOAD",
            Error::Proof(_) => "E_PROOF",
            Error::Unavailable { .. } => "E_UNAVAILABLE",
            Error::Io { .. } => "E_IO",
            Error::Serde(_) => "E_SERDE",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
