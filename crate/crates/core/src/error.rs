use thiserror::Error;

pub type Result<T> = std::result::Result<T, LpnnError>;

#[derive(Debug, Error)]
pub enum LpnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LpnnError {
    /// Process exit code used by the command-line tool.
    ///
    /// 1 for usage/config problems, 2 for data problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LpnnError::Config(_) | LpnnError::Precondition(_) | LpnnError::State(_) | LpnnError::Json(_) => 1,
            LpnnError::Data(_) | LpnnError::Io(_) | LpnnError::Shape(_) => 2,
            LpnnError::NonFinite(_) | LpnnError::Numeric(_) => 3,
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> LpnnError {
    LpnnError::Shape(msg.into())
}
