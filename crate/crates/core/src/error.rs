use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that cannot be combined by the named operation.
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An index outside its valid range.
    #[error("{op}: index {index} out of range (limit {limit})")]
    Index {
        op: String,
        index: usize,
        limit: usize,
    },

    /// A violated call contract (wrong arity, non-scalar root, ...).
    #[error("{0}")]
    Contract(String),

    /// Invalid configuration; the message names the offending key.
    #[error("config: {0}")]
    Config(String),

    /// Malformed on-disk data; the message names the field.
    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op: op.to_string(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn index(op: &str, index: usize, limit: usize) -> Self {
        Error::Index {
            op: op.to_string(),
            index,
            limit,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
