use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {constraint}")]
    Validation { field: String, constraint: String },

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error(transparent)]
    Core(#[from] dampwave::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation { .. } | HarnessError::Parse(_) => 2,
            HarnessError::Certification(_) => 3,
            HarnessError::Core(dampwave::Error::Oracle(_)) => 4,
            HarnessError::Core(dampwave::Error::InvalidArgument { .. })
            | HarnessError::Core(dampwave::Error::LengthMismatch { .. })
            | HarnessError::Core(dampwave::Error::NegativeTime(_)) => 2,
            HarnessError::Core(_) | HarnessError::Csv(_) | HarnessError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn invalid(field: &str, constraint: impl Into<String>) -> HarnessError {
    HarnessError::Validation {
        field: field.to_string(),
        constraint: constraint.into(),
    }
}
