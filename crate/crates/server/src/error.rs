use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use manualbridge_core::ingest::IngestError;
use manualbridge_core::qa::{Answer, QaError};
use manualbridge_core::store::StoreError;
use serde::Serialize;

/// Every code a response can carry.
pub const ERROR_CODES: &[&str] = &[
    "invalid_request",
    "unauthorized",
    "not_found",
    "method_not_allowed",
    "unsupported_format",
    "too_large",
    "no_extractable_text",
    "empty_text",
    "unknown_language",
    "provider_unreachable",
    "provider_error",
    "internal_error",
];

/// JSON error body; `http_status` always equals the response status.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub http_status: u16,
    /// The localized refusal, for failures that happened while answering.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<Box<Answer>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        debug_assert!(ERROR_CODES.contains(&code));
        Self {
            code,
            message: message.into(),
            http_status: status.as_u16(),
            answer: None,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("upload exceeds the {limit}-byte limit"),
        )
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        (self.status(), Json(self)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnsupportedFormat(_) | IngestError::EncryptedDocument => {
                Self::new(StatusCode::BAD_REQUEST, "unsupported_format", e.to_string())
            }
            IngestError::NoExtractableText | IngestError::EmptyDocument => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_extractable_text", e.to_string())
            }
            IngestError::InvalidConfig(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => Self::not_found(e.to_string()),
            StoreError::UnknownLanguage(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_language", e.to_string())
            }
            StoreError::InvalidArgument(_) => Self::invalid(e.to_string()),
            StoreError::Ingest(inner) => inner.into(),
            StoreError::StorageFull => Self::new(
                StatusCode::INSUFFICIENT_STORAGE,
                "internal_error",
                e.to_string(),
            ),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<QaError> for ApiError {
    fn from(e: QaError) -> Self {
        match e {
            QaError::EmptyText => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_text", e.to_string())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}
