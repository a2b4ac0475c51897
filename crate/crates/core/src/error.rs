use thiserror::Error;

/// Errors produced by the influence engine.
#[derive(Debug, Error)]
pub enum RiseError {
    /// A file does not follow its declared layout (bad magic, version, or header).
    #[error("format error: {0}")]
    Format(String),

    /// A file is truncated or its payload length disagrees with its header.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// Index and queries were featurized with different configurations.
    #[error("config fingerprint mismatch: index {expected:#018x}, query {found:#018x}")]
    ConfigMismatch { expected: u64, found: u64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RiseError {
    /// True for errors caused by unreadable or damaged inputs rather than bad arguments.
    pub fn is_io_or_corruption(&self) -> bool {
        matches!(self, RiseError::Io(_) | RiseError::Corrupt(_) | RiseError::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, RiseError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RiseError::InvalidArgument(msg.into()))
}
