use thiserror::Error;

pub type Result<T, E = KpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KpError {
    /// Operand shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A zero-norm vector reached cosine similarity.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The caller violated an API contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data is inconsistent with what the operation expects.
    #[error("data error: {0}")]
    Data(String),

    /// A file could not be parsed. `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// Training produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KpError {
    pub fn format(line: usize, message: impl Into<String>) -> Self {
        KpError::Format {
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            KpError::Usage(_) => 1,
            KpError::Numeric(_) | KpError::DegenerateInput(_) => 3,
            KpError::Dimension(_)
            | KpError::Data(_)
            | KpError::Format { .. }
            | KpError::Io(_) => 2,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::KpError::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
