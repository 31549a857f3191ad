//! Crate-wide error type.
//!
//! Every failure mode named by the library's contracts maps to one variant so
//! callers (and tests) can match on the class of failure without string
//! inspection. Messages carry the human-readable detail.

/// Errors produced by any module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input text (TSV triples, JSONL queries, config files).
    /// Carries the source path (or a pseudo-path like `<inline>`) and the
    /// 1-based line number.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Unknown entity/relation label, duplicate vocabulary entry, or a label
    /// that collides with the reserved inverse suffix.
    #[error("vocabulary error: {0}")]
    Vocab(String),

    /// Vector/matrix dimension mismatch.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Structurally invalid query graph (bad node index, free variable used
    /// as a source, anchor used as a destination, isolated variable, ...).
    #[error("structure error: {0}")]
    Structure(String),

    /// Cyclic dependency among query variables.
    #[error("cycle error: {0}")]
    Cycle(String),

    /// Wrong count of free variables, anchors, or relations for a template.
    #[error("arity error: {0}")]
    Arity(String),

    /// Query sampling exhausted its attempt budget.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Malformed binary checkpoint (bad magic, truncation, version).
    #[error("format error: {0}")]
    Format(String),

    /// Checkpoint that parses but fails integrity checks (NaN payload,
    /// trailing bytes, inconsistent header).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Invalid metric computation (empty answer set, score/vocab mismatch).
    #[error("metric error: {0}")]
    Metric(String),

    /// Input data violates a pipeline precondition (missing answer labels,
    /// wrong query tag for a training stage, empty training set).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid run configuration (unknown key, out-of-range value, reserved
    /// feature enabled).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for parse errors.
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
