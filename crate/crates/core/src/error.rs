use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid range [{x}, {y}]: left boundary exceeds right boundary")]
    InvalidRange { x: i64, y: i64 },

    #[error("attribute value {0} is not present in the attribute tree")]
    AttributeNotFound(i64),

    #[error("rank {rank} out of bounds for {len} unique values")]
    RankOutOfBounds { rank: usize, len: usize },

    #[error("invalid vector id {id} (size {len})")]
    InvalidId { id: u32, len: usize },

    #[error("entry vertex {0} is deleted")]
    DeletedEntry(u32),

    #[error("entry vertex {id} has attribute {attr} outside the search range")]
    EntryOutOfRange { id: u32, attr: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("in-range fraction bounds undefined for o={o}, l={l}, n'={n_prime}: {reason}")]
    BoundsCase {
        o: u64,
        l: u32,
        n_prime: u64,
        reason: &'static str,
    },

    #[error("{path}: malformed data at byte offset {offset}: {msg}")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("corrupt index file: bad {field} at byte offset {offset}: {msg}")]
    Corrupt {
        field: &'static str,
        offset: u64,
        msg: String,
    },

    #[error("workload: {0}")]
    Workload(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A named structural invariant that failed a check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl Violation {
    pub fn new(invariant: &'static str, detail: impl Into<String>) -> Self {
        Self {
            invariant,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}
