use thiserror::Error;

/// A prepare-update was rejected by the data type's precondition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("amount must be positive, got {0}")]
    NonPositiveAmount(i64),
    #[error("histogram delta must contain at least one bin with a positive count")]
    EmptyDelta,
    #[error("operation `{0}` is not supported by data type `{1}`")]
    Unsupported(&'static str, &'static str),
}

/// A simulation configuration violates one of its invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field, reason: reason.into() }
    }

    pub fn field(&self) -> &'static str {
        match self {
            ConfigError::Invalid { field, .. } => field,
        }
    }
}
