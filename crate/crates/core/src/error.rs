use thiserror::Error;

use crate::compare::CompareError;
use crate::decision::DecisionError;
use crate::double_check::SearchError;
use crate::gateway::GatewayError;
use crate::scorecard::ScorecardError;
use crate::session::Mode;
use crate::source::SourceError;
use crate::store::StoreError;

/// Errors surfaced by session and workbench operations.
///
/// `code()` is the stable machine-readable name; module errors keep their own
/// codes when wrapped.
#[derive(Debug, Error)]
pub enum Error {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("`{operation}` is not allowed in {current} mode")]
    WrongMode { current: Mode, operation: &'static str },
    #[error("session has no responses yet")]
    NoResponses,
    #[error("session has no recorded verifications")]
    NoVerifications,
    #[error("unknown response `{0}`")]
    UnknownResponse(String),
    #[error("unknown turn {0}")]
    UnknownTurn(usize),
    #[error("unknown library item `{0}`")]
    UnknownLibraryItem(String),
    #[error("every provider failed: {0}")]
    GenerationFailed(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Decision(DecisionError),
    #[error(transparent)]
    Scorecard(#[from] ScorecardError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<DecisionError> for Error {
    fn from(e: DecisionError) -> Self {
        match e {
            DecisionError::NoVerifications => Error::NoVerifications,
            other => Error::Decision(other),
        }
    }
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Self::SessionNotFound(_) => "SessionNotFound",
            Self::WrongMode { .. } => "WrongMode",
            Self::NoResponses => "NoResponses",
            Self::NoVerifications => "NoVerifications",
            Self::UnknownResponse(_) => "UnknownResponse",
            Self::UnknownTurn(_) => "UnknownTurn",
            Self::UnknownLibraryItem(_) => "UnknownLibraryItem",
            Self::GenerationFailed(_) => "GenerationFailed",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::InvalidRequest(_) => "InvalidRequest",
            Self::Gateway(e) => e.code(),
            Self::Source(e) => e.code(),
            Self::Search(e) => e.code(),
            Self::Compare(e) => e.code(),
            Self::Decision(e) => e.code(),
            Self::Scorecard(e) => e.code(),
            Self::Store(e) => e.code(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
