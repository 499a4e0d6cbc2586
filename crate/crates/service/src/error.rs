use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("profile '{0}' not found")]
    ProfileNotFound(String),

    #[error("unknown item ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),

    #[error("'{0}' cannot be preferred over itself")]
    SelfPair(String),

    #[error("profile '{0}' already exists")]
    DuplicateProfile(String),

    #[error("dimension mismatch: corpus has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid request: {0}")]
    Invalid(String),

    #[error("event log integrity: {0}")]
    Integrity(String),

    #[error("storage: {0}")]
    Storage(String),

    #[error(transparent)]
    Core(#[from] prefadapt::Error),
}

/// Body of every error response.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error_code: &'static str,
    pub message: String,
    pub details: serde_json::Value,
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::ProfileNotFound(_) | ServiceError::UnknownIds(_) => 404,
            ServiceError::DuplicateProfile(_) => 409,
            ServiceError::SelfPair(_) | ServiceError::DimensionMismatch { .. } | ServiceError::Invalid(_) => 422,
            ServiceError::Core(e) => match e {
                prefadapt::Error::Io { .. } | prefadapt::Error::Corruption(_) | prefadapt::Error::Format(_) => 500,
                _ => 422,
            },
            ServiceError::Integrity(_) | ServiceError::Storage(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::ProfileNotFound(_) | ServiceError::UnknownIds(_) => "not_found",
            ServiceError::SelfPair(_) => "self_pair",
            ServiceError::DuplicateProfile(_) => "duplicate_profile",
            ServiceError::DimensionMismatch { .. } => "dimension_mismatch",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Integrity(_) => "integrity",
            ServiceError::Storage(_) => "storage",
            ServiceError::Core(prefadapt::Error::DimensionMismatch { .. }) => "dimension_mismatch",
            ServiceError::Core(_) if self.status() == 422 => "invalid_request",
            ServiceError::Core(_) => "internal",
        }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            ServiceError::ProfileNotFound(id) => serde_json::json!({ "profile_id": id }),
            ServiceError::UnknownIds(ids) => serde_json::json!({ "unknown_ids": ids }),
            ServiceError::DimensionMismatch { expected, found } => {
                serde_json::json!({ "expected": expected, "found": found })
            }
            ServiceError::DuplicateProfile(id) => serde_json::json!({ "profile_id": id }),
            _ => serde_json::Value::Null,
        };
        ErrorBody {
            error_code: self.code(),
            message: self.to_string(),
            details,
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}
