use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes, grids or labels do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// Model document violates an invariant; `path` points at the field.
    #[error("invalid model at {path}: {message}")]
    Validation { path: String, message: String },

    /// Conditional expectation on a cell of zero measure.
    #[error("degenerate cell at t_{time}: cell {cell} {atoms:?} has zero measure")]
    DegenerateCell {
        time: usize,
        cell: usize,
        atoms: Vec<usize>,
    },

    /// An operation's precondition does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A named modelling assumption fails; the pipeline refuses.
    #[error("assumption {assumption} fails: {detail}")]
    Assumption { assumption: String, detail: String },

    /// Model class outside the supported ones.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two independent computation routes disagree.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn assumption(name: &str, detail: impl Into<String>) -> Self {
        Error::Assumption {
            assumption: name.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
