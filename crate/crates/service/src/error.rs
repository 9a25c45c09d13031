use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use floodsense_core::aggregation::AggregationError;
use floodsense_core::ledger::LedgerError;
use floodsense_core::store::StoreError;
use serde::Serialize;
use serde_json::Value;

/// Error answered to HTTP clients as `{"error": .., "message": .., ...}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "admin token required",
        )
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let message = e.to_string();
        match e {
            LedgerError::UnknownUser(_) | LedgerError::UnknownRegion(_) => Self::not_found(message),
            LedgerError::BlacklistedUser(_) => {
                Self::new(StatusCode::FORBIDDEN, "blacklisted", message)
            }
            LedgerError::DuplicateUser(_)
            | LedgerError::DuplicateReport(_)
            | LedgerError::WindowClosed(_) => Self::conflict(message),
            LedgerError::InvalidReport(violations) => Self::unprocessable(message)
                .with_details(serde_json::to_value(violations).expect("violations serialise")),
            LedgerError::Geo(_) => Self::bad_request(message),
            LedgerError::Invalid(_) => Self::unprocessable(message),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvariantViolation(inner) => inner.into(),
            StoreError::UnknownUser(u) => Self::not_found(format!("unknown user {u}")),
            other => {
                tracing::error!(error = %other, "event store failure");
                Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "storage_failure",
                    other.to_string(),
                )
            }
        }
    }
}

impl From<AggregationError> for ApiError {
    fn from(e: AggregationError) -> Self {
        Self::not_found(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.code,
            message: &self.message,
            details: self.details.as_ref(),
        };
        (self.status, Json(body)).into_response()
    }
}
