use thiserror::Error;

pub type Result<T> = std::result::Result<T, AoftError>;

#[derive(Debug, Error)]
pub enum AoftError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// `1 + q0` fell below the pole guard.
    #[error("generator vector too close to the pole: 1 + q0 = {} with q0 = {q0}", 1.0 + .q0)]
    Pole { q0: f64 },

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("frozen parameter `{0}` was modified during training")]
    FrozenMutation(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AoftError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AoftError::Pole { .. }
                | AoftError::NonFinite(_)
                | AoftError::Divergence(_)
                | AoftError::FrozenMutation(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> AoftError {
    AoftError::InvalidArgument(msg.into())
}
