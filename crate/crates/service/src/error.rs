use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dtdialog::dialog::DialogError;
use dtdialog::evaluation::EvaluationError;
use dtdialog::persistence::StoreError;

/// Every error the service can return. The serialized names form the closed
/// set of `code` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    MethodNotAllowed,
    InvalidRequest,
    Unauthorized,
    NoTree,
    TreeNotFound,
    NoDataset,
    SessionNotFound,
    InvalidAnswer,
    AttributeMismatch,
    SessionClosed,
    AwaitingConfirmation,
    NoPendingConfirmation,
    SessionNotClassified,
    InvalidLabel,
    InvalidScore,
    VersionConflict,
    RetrainFailed,
    StorageError,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 19] = [
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::InvalidRequest,
        ErrorCode::Unauthorized,
        ErrorCode::NoTree,
        ErrorCode::TreeNotFound,
        ErrorCode::NoDataset,
        ErrorCode::SessionNotFound,
        ErrorCode::InvalidAnswer,
        ErrorCode::AttributeMismatch,
        ErrorCode::SessionClosed,
        ErrorCode::AwaitingConfirmation,
        ErrorCode::NoPendingConfirmation,
        ErrorCode::SessionNotClassified,
        ErrorCode::InvalidLabel,
        ErrorCode::InvalidScore,
        ErrorCode::VersionConflict,
        ErrorCode::RetrainFailed,
        ErrorCode::StorageError,
    ];

    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            NotFound | SessionNotFound | TreeNotFound => StatusCode::NOT_FOUND,
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            InvalidRequest => StatusCode::BAD_REQUEST,
            Unauthorized => StatusCode::UNAUTHORIZED,
            InvalidAnswer | InvalidLabel | InvalidScore => StatusCode::UNPROCESSABLE_ENTITY,
            NoTree | NoDataset | AttributeMismatch | SessionClosed | AwaitingConfirmation
            | NoPendingConfirmation | SessionNotClassified | VersionConflict => {
                StatusCode::CONFLICT
            }
            RetrainFailed | StorageError => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<DialogError> for ApiError {
    fn from(e: DialogError) -> Self {
        let code = match &e {
            DialogError::SessionClosed => ErrorCode::SessionClosed,
            DialogError::AttributeMismatch { .. } => ErrorCode::AttributeMismatch,
            DialogError::NoPendingQuestion => ErrorCode::SessionClosed,
            DialogError::AwaitingConfirmation => ErrorCode::AwaitingConfirmation,
            DialogError::NoPendingConfirmation => ErrorCode::NoPendingConfirmation,
            DialogError::VersionMismatch { .. } => ErrorCode::VersionConflict,
            DialogError::BadReplay(_) => ErrorCode::StorageError,
            DialogError::InvalidConfidence(_)
            | DialogError::MissingVolunteered(_)
            | DialogError::InvalidAnswer(_) => ErrorCode::InvalidAnswer,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::TreeNotFound(_) => ErrorCode::TreeNotFound,
            StoreError::NoTree => ErrorCode::NoTree,
            StoreError::UnknownSession(_) | StoreError::InvalidSessionId(_) => {
                ErrorCode::SessionNotFound
            }
            StoreError::SessionNotClassified(_) => ErrorCode::SessionNotClassified,
            StoreError::UnknownLabel(_) => ErrorCode::InvalidLabel,
            StoreError::DatasetNotFound(_) => ErrorCode::NoDataset,
            StoreError::Induction(_) | StoreError::Dataset(_) => ErrorCode::RetrainFailed,
            StoreError::Io { .. }
            | StoreError::VersionExists(_)
            | StoreError::DigestMismatch { .. }
            | StoreError::Corrupt { .. } => ErrorCode::StorageError,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<EvaluationError> for ApiError {
    fn from(e: EvaluationError) -> Self {
        let code = match e {
            EvaluationError::ScoreOutOfRange(_) => ErrorCode::InvalidScore,
            _ => ErrorCode::InvalidRequest,
        };
        ApiError::new(code, e.to_string())
    }
}
