use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use twai_core::Error;

/// Every error code the service can emit, with its HTTP status. Codes are
/// part of the public interface; only append to this table.
pub const ERROR_CODES: &[(&str, u16)] = &[
    // lookups
    ("SessionNotFound", 404),
    ("UnknownResponse", 404),
    ("UnknownTurn", 404),
    ("UnknownLibraryItem", 404),
    ("UnknownProvider", 404),
    ("NotFound", 404),
    ("NoEntries", 404),
    // workflow state
    ("WrongMode", 409),
    ("NoResponses", 409),
    ("NoVerifications", 409),
    ("NotInTable", 409),
    ("EmptyIndex", 409),
    ("DuplicateProvider", 409),
    ("DuplicateDocument", 409),
    ("DuplicateEntry", 409),
    ("SessionExists", 409),
    ("WorkspaceLocked", 409),
    // invalid input
    ("InvalidRequest", 422),
    ("InvalidConfig", 422),
    ("EmptyPrompt", 422),
    ("NoProviders", 422),
    ("TooFewProviders", 422),
    ("EmptyDocument", 422),
    ("InvalidK", 422),
    ("InvalidChunking", 422),
    ("EmptyQuery", 422),
    ("InvalidFixture", 422),
    ("InvalidWeights", 422),
    ("IncompleteRatings", 422),
    ("InvalidCsv", 422),
    ("VersionUnsupported", 422),
    ("CorruptArchive", 422),
    ("InvalidRecord", 422),
    // upstream
    ("ProviderUnavailable", 502),
    ("GenerationFailed", 502),
    ("CompareFailed", 502),
    ("SearchUnavailable", 502),
    // local failures
    ("ReadOnly", 500),
    ("IoError", 500),
    ("PortInUse", 500),
];

pub fn status_for(code: &str) -> StatusCode {
    ERROR_CODES
        .iter()
        .find(|(c, _)| *c == code)
        .and_then(|(_, s)| StatusCode::from_u16(*s).ok())
        .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            http_status: status_for(code).as_u16(),
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new("InvalidRequest", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
