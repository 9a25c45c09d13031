use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use floodsense_core::aggregation::{aggregate_region, AggregateDocument};
use floodsense_core::ledger::WindowKey;
use floodsense_core::trust::AssessmentRecord;
use floodsense_core::UserStatus;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::ops::{self, RegisterRequest};
use crate::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/users", post(register))
        .route("/users/{id}/status", get(user_status))
        .route("/reports", post(submit))
        .route("/admin/detect", post(detect))
        .route("/aggregates/{region}", get(aggregates))
        .with_state(state)
}

/// Malformed JSON is a 400; well-formed JSON of the wrong shape is a 422.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))?;
    serde_json::from_value(value).map_err(|e| ApiError::unprocessable(e.to_string()))
}

async fn register(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RegisterRequest = parse_body(&body)?;
    let now = state.now();
    let out = ops::register_user(&mut state.store(), req, now)?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn submit(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let report = parse_body(&body)?;
    let now = state.now();
    let (status, ack) = ops::submit_report(&mut state.store(), report, now)?;
    Ok((status, Json(ack)).into_response())
}

#[derive(Debug, Deserialize)]
struct DetectParams {
    region: usize,
    period: u64,
    #[serde(default)]
    force: bool,
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = state.settings.admin_token.as_deref() else {
        return false;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|token| token == expected)
}

async fn detect(
    State(state): State<AppState>,
    headers: HeaderMap,
    params: Result<Query<DetectParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    if !authorized(&state, &headers) {
        return Err(ApiError::unauthorized());
    }
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let now = state.now();
    let mut store = state.store();
    let key = WindowKey {
        region: p.region,
        period: p.period,
    };
    let ledger = store.ledger();
    if !ledger.context().grid.contains_region(p.region) {
        return Err(ApiError::not_found(format!("unknown region {}", p.region)));
    }
    let end = ledger.context().period.period_end(p.period);
    if !p.force && ledger.window(key).is_none() && now < end {
        return Err(ApiError::conflict(format!(
            "period {} is still open until {end}; pass force=true to evaluate it now",
            p.period
        )));
    }
    let summary = ops::detect_window(&mut store, key, &state.settings.detection, now)?;
    Ok(Json(summary).into_response())
}

#[derive(Debug, Deserialize)]
struct RangeParams {
    from: Option<u64>,
    to: Option<u64>,
}

async fn aggregates(
    State(state): State<AppState>,
    Path(region): Path<String>,
    params: Result<Query<RangeParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let region: usize = region
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown region {region}")))?;
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let now = state.now();
    let store = state.store();
    let ledger = store.ledger();
    let current = ledger.context().period.period_of(now).unwrap_or(0);
    let (from, to) = (p.from.unwrap_or(0), p.to.unwrap_or(current));
    if from > to {
        return Err(ApiError::bad_request(format!(
            "from {from} is after to {to}"
        )));
    }
    let report = aggregate_region(ledger, region, from, to)?;
    Ok(Json(AggregateDocument::from(&report)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub user_id: String,
    pub status: UserStatus,
    pub blacklisted_in: Option<WindowKey>,
    pub assessments: Vec<AssessmentRecord>,
}

async fn user_status(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let store = state.store();
    let ledger = store.ledger();
    let user = ledger
        .user(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown user {id}")))?;
    Ok(Json(StatusResponse {
        user_id: id.clone(),
        status: user.status,
        blacklisted_in: ledger.blacklisted_in(&id),
        assessments: ledger.history(&id),
    })
    .into_response())
}
