use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use substrace::clustering::ClusterError;
use substrace::flowgraph::FlowError;
use substrace::ingest::IngestError;
use substrace::mechanisms::MechanismError;
use substrace::model::ModelError;

/// Error body shared by the HTTP API and the CLI's stderr line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("no dataset is loaded")]
    ServiceNotReady,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    EmptyWindow(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("k must be between 2 and 10, got {0}")]
    InvalidK(usize),
    #[error("{0}")]
    InsufficientProjects(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    NotAlive(String),
    #[error("a pair needs two different projects, got {0} twice")]
    SamePair(String),
    #[error("{0}")]
    DataError(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::ServiceNotReady => "ServiceNotReady",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::EmptyWindow(_) => "EmptyWindow",
            ApiError::UnknownAttribute(_) => "UnknownAttribute",
            ApiError::InvalidK(_) => "InvalidK",
            ApiError::InsufficientProjects(_) => "InsufficientProjects",
            ApiError::NotFound(_) => "NotFound",
            ApiError::NotAlive(_) => "NotAlive",
            ApiError::SamePair(_) => "SamePair",
            ApiError::DataError(_) => "DataError",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::ServiceNotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::DataError(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }

    /// True for errors caused by the request itself rather than the data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            ApiError::BadRequest(_) | ApiError::UnknownAttribute(_) | ApiError::InvalidK(_) | ApiError::SamePair(_)
        )
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), axum::Json(self.body())).into_response()
    }
}

impl From<MechanismError> for ApiError {
    fn from(e: MechanismError) -> Self {
        match e {
            MechanismError::EmptyWindow(_) => ApiError::EmptyWindow(e.to_string()),
            MechanismError::UnknownAttribute(a) => ApiError::UnknownAttribute(a),
            MechanismError::NoAttributes => ApiError::BadRequest(e.to_string()),
            MechanismError::InsufficientProjects(_) => ApiError::InsufficientProjects(e.to_string()),
            MechanismError::Model(m) => m.into(),
            other => ApiError::DataError(other.to_string()),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidWindow { .. } => ApiError::EmptyWindow(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl From<ClusterError> for ApiError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::TooManyClusters { .. } => ApiError::InsufficientProjects(e.to_string()),
            ClusterError::InvalidK(k) => ApiError::InvalidK(k),
            other => ApiError::DataError(other.to_string()),
        }
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NotFound(m) => ApiError::NotFound(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        ApiError::DataError(e.to_string())
    }
}
