//! Request handling against the store, independent of HTTP.

use axum::http::StatusCode;
use floodsense_core::ledger::{Ledger, StoredReport, WindowKey};
use floodsense_core::store::{Event, Store};
use floodsense_core::trust::{run_detection, AssessmentRecord, DetectionConfig};
use floodsense_core::{validate_report, Report, UserProfile};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RegisterRequest {
    pub user_id: Option<String>,
    pub identity: Option<String>,
    #[serde(default)]
    pub education_level: String,
    #[serde(default)]
    pub relief_courses: Vec<String>,
    #[serde(default)]
    pub prior_participation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registered {
    pub user_id: String,
}

pub fn register_user(
    store: &mut Store,
    req: RegisterRequest,
    now: i64,
) -> Result<Registered, ApiError> {
    let identity = req
        .identity
        .filter(|i| !i.trim().is_empty())
        .ok_or_else(|| ApiError::unprocessable("identity is required"))?;
    let user_id = match req.user_id {
        Some(id) if id.trim().is_empty() => {
            return Err(ApiError::unprocessable("user_id must not be empty"))
        }
        Some(id) => id,
        None => {
            let ledger = store.ledger();
            let mut n = ledger.users().count() + 1;
            while ledger.user(&format!("u{n:06}")).is_some() {
                n += 1;
            }
            format!("u{n:06}")
        }
    };
    let profile = UserProfile {
        education_level: req.education_level,
        relief_courses: req.relief_courses,
        prior_participation: req.prior_participation,
        ..UserProfile::new(user_id.clone(), identity)
    };
    store.append(Event::UserRegistered(profile), now)?;
    tracing::info!(%user_id, "user registered");
    Ok(Registered { user_id })
}

/// Acknowledgement of an accepted report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub report_id: String,
    pub region: usize,
    pub period: u64,
    pub late: bool,
}

/// Returns 202 for a new report and 200 for an exact resubmission.
pub fn submit_report(
    store: &mut Store,
    report: Report,
    now: i64,
) -> Result<(StatusCode, Ack), ApiError> {
    let ledger = store.ledger();
    if ledger.user(&report.user_id).is_none() {
        return Err(ApiError::not_found(format!(
            "unknown user {}",
            report.user_id
        )));
    }
    if ledger.is_blacklisted(&report.user_id) {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "blacklisted",
            format!("user {} is blacklisted", report.user_id),
        ));
    }
    let report = validate_report(report, ledger.schema())
        .map_err(|v| {
            ApiError::unprocessable("report does not match the questionnaire")
                .with_details(serde_json::to_value(v).expect("violations serialise"))
        })?
        .into_inner();
    if let Some(existing) = ledger.report(&report.report_id) {
        if existing.report == report {
            return Ok((StatusCode::OK, ack(existing)));
        }
        return Err(ApiError::conflict(format!(
            "report {} already exists with different content",
            report.report_id
        )));
    }
    let placement = ledger.place(&report)?;
    let stored = StoredReport {
        report,
        region: placement.region,
        period: placement.period,
        late: placement.late,
    };
    let ack = ack(&stored);
    store.append(Event::ReportSubmitted(stored), now)?;
    Ok((StatusCode::ACCEPTED, ack))
}

fn ack(stored: &StoredReport) -> Ack {
    Ack {
        report_id: stored.report.report_id.clone(),
        region: stored.region,
        period: stored.period,
        late: stored.late,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub region: usize,
    pub period: u64,
    /// The window had been evaluated before this request; nothing was written.
    pub already_evaluated: bool,
    pub executed: bool,
    pub participants: usize,
    pub malicious: Vec<String>,
    pub assessments: Vec<AssessmentRecord>,
}

/// Evaluates one window, or reports the stored outcome if it already ran.
/// A window without reports from users in good standing is left open and
/// nothing is written.
pub fn detect_window(
    store: &mut Store,
    key: WindowKey,
    detection: &DetectionConfig,
    now: i64,
) -> Result<DetectSummary, ApiError> {
    let ledger = store.ledger();
    if !ledger.context().grid.contains_region(key.region) {
        return Err(ApiError::not_found(format!(
            "unknown region {}",
            key.region
        )));
    }
    if let Some(w) = ledger.window(key) {
        return Ok(summary(w, true));
    }
    let window = ledger.build_window(key)?;
    if window.rows.is_empty() {
        return Ok(summary(&window, false));
    }
    let window = run_detection(window, detection);
    let flagged: Vec<String> = window.malicious_users().map(str::to_owned).collect();
    let out = summary(&window, false);
    store.append(Event::DetectionRun(window), now)?;
    for user_id in flagged {
        tracing::info!(%user_id, region = key.region, period = key.period, "user blacklisted");
        store.append(
            Event::UserBlacklisted {
                user_id,
                region: key.region,
                period: key.period,
            },
            now,
        )?;
    }
    Ok(out)
}

fn summary(w: &floodsense_core::trust::DetectionWindow, already: bool) -> DetectSummary {
    DetectSummary {
        region: w.region,
        period: w.period,
        already_evaluated: already,
        executed: w.executed,
        participants: w.assessments.len().max(w.rows.len()),
        malicious: w.malicious_users().map(str::to_owned).collect(),
        assessments: w.records(),
    }
}

/// Windows holding reports whose period ended at least `grace` seconds
/// before `now`, in (period, region) order.
pub fn due_windows(ledger: &Ledger, now: i64, grace: i64) -> Vec<WindowKey> {
    let period = &ledger.context().period;
    ledger
        .pending_windows()
        .into_iter()
        .filter(|k| period.period_end(k.period).saturating_add(grace) <= now)
        .collect()
}

/// One timer pass: evaluates every due window in order.
pub fn run_due(
    store: &mut Store,
    now: i64,
    grace: i64,
    detection: &DetectionConfig,
) -> Result<Vec<DetectSummary>, ApiError> {
    let mut out = Vec::new();
    for key in due_windows(store.ledger(), now, grace) {
        out.push(detect_window(store, key, detection, now)?);
    }
    Ok(out)
}
