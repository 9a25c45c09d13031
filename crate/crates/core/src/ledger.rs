//! In-memory service state, rebuilt by folding the event log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, PeriodConfig, RegionGrid};
use crate::report::{validate_report, Report, ReportViolation};
use crate::schema::QuestionnaireSchema;
use crate::store::Event;
use crate::trust::{consolidate, AssessmentRecord, DetectionWindow, Verdict};
use crate::user::UserProfile;

/// Everything a ledger needs to interpret reports. Fixed for the lifetime of
/// a log and recorded in its header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerContext {
    pub schema: QuestionnaireSchema,
    pub grid: RegionGrid,
    pub period: PeriodConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowKey {
    pub region: usize,
    pub period: u64,
}

/// Where an accepted report was filed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub region: usize,
    pub period: u64,
    /// The report's own period had already been evaluated, so it was moved
    /// to the next open one.
    pub late: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub report: Report,
    pub region: usize,
    pub period: u64,
    #[serde(default)]
    pub late: bool,
}

impl StoredReport {
    pub fn key(&self) -> WindowKey {
        WindowKey {
            region: self.region,
            period: self.period,
        }
    }

    pub fn placement(&self) -> Placement {
        Placement {
            region: self.region,
            period: self.period,
            late: self.late,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("user {0} is already registered")]
    DuplicateUser(String),
    #[error("user {0} is blacklisted")]
    BlacklistedUser(String),
    #[error("report {0} already exists")]
    DuplicateReport(String),
    #[error("unknown region {0}")]
    UnknownRegion(usize),
    #[error("window ({}, {}) was already evaluated", .0.region, .0.period)]
    WindowClosed(WindowKey),
    #[error("report rejected: {0:?}")]
    InvalidReport(Vec<ReportViolation>),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    context: LedgerContext,
    users: BTreeMap<String, UserProfile>,
    reports: BTreeMap<String, StoredReport>,
    window_reports: BTreeMap<WindowKey, BTreeSet<String>>,
    purged_reports: BTreeSet<String>,
    windows: BTreeMap<WindowKey, DetectionWindow>,
    blacklisted_in: BTreeMap<String, WindowKey>,
}

impl Ledger {
    pub fn new(context: LedgerContext) -> Self {
        Self {
            context,
            users: BTreeMap::new(),
            reports: BTreeMap::new(),
            window_reports: BTreeMap::new(),
            purged_reports: BTreeSet::new(),
            windows: BTreeMap::new(),
            blacklisted_in: BTreeMap::new(),
        }
    }

    pub fn context(&self) -> &LedgerContext {
        &self.context
    }

    pub fn schema(&self) -> &QuestionnaireSchema {
        &self.context.schema
    }

    pub fn user(&self, user_id: &str) -> Option<&UserProfile> {
        self.users.get(user_id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserProfile> {
        self.users.values()
    }

    pub fn is_blacklisted(&self, user_id: &str) -> bool {
        self.users
            .get(user_id)
            .is_some_and(UserProfile::is_blacklisted)
    }

    pub fn blacklisted_in(&self, user_id: &str) -> Option<WindowKey> {
        self.blacklisted_in.get(user_id).copied()
    }

    pub fn report(&self, report_id: &str) -> Option<&StoredReport> {
        self.reports.get(report_id)
    }

    pub fn reports(&self) -> impl Iterator<Item = &StoredReport> {
        self.reports.values()
    }

    pub fn is_purged_report(&self, report_id: &str) -> bool {
        self.purged_reports.contains(report_id)
    }

    pub fn window(&self, key: WindowKey) -> Option<&DetectionWindow> {
        self.windows.get(&key)
    }

    pub fn windows(&self) -> impl Iterator<Item = &DetectionWindow> {
        self.windows.values()
    }

    /// Reports filed in a window, ordered by report id.
    pub fn reports_in(&self, key: WindowKey) -> impl Iterator<Item = &StoredReport> {
        self.window_reports
            .get(&key)
            .into_iter()
            .flatten()
            .filter_map(|id| self.reports.get(id))
    }

    /// Windows that currently hold at least one report.
    pub fn report_windows(&self) -> impl Iterator<Item = WindowKey> + '_ {
        self.window_reports.keys().copied()
    }

    /// Windows holding reports that have not been evaluated, oldest period
    /// first, then by region.
    pub fn pending_windows(&self) -> Vec<WindowKey> {
        let mut keys: Vec<WindowKey> = self
            .window_reports
            .iter()
            .filter(|(k, ids)| !ids.is_empty() && !self.windows.contains_key(k))
            .map(|(k, _)| *k)
            .collect();
        keys.sort_by_key(|k| (k.period, k.region));
        keys
    }

    /// Region and period a report would be filed under right now.
    pub fn place(&self, report: &Report) -> Result<Placement, LedgerError> {
        let region = self
            .context
            .grid
            .region_of(report.latitude, report.longitude)?;
        let nominal = self.context.period.period_of(report.timestamp)?;
        let mut period = nominal;
        while self.windows.contains_key(&WindowKey { region, period }) {
            period += 1;
        }
        Ok(Placement {
            region,
            period,
            late: period != nominal,
        })
    }

    /// Consolidated rows for a window from the reports of users still in
    /// good standing.
    pub fn build_window(&self, key: WindowKey) -> Result<DetectionWindow, LedgerError> {
        if !self.context.grid.contains_region(key.region) {
            return Err(LedgerError::UnknownRegion(key.region));
        }
        let mut by_user: BTreeMap<&str, Vec<&Report>> = BTreeMap::new();
        for stored in self.reports_in(key) {
            if !self.is_blacklisted(&stored.report.user_id) {
                by_user
                    .entry(stored.report.user_id.as_str())
                    .or_default()
                    .push(&stored.report);
            }
        }
        let rows = by_user
            .into_values()
            .map(|reports| consolidate(reports, self.schema()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LedgerError::Invalid(e.to_string()))?;
        DetectionWindow::new(key.region, key.period, rows)
            .map_err(|e| LedgerError::Invalid(e.to_string()))
    }

    /// The user's verdict in a window, if the window has been evaluated.
    pub fn verdict(&self, user_id: &str, key: WindowKey) -> Option<Verdict> {
        self.windows.get(&key).and_then(|w| w.verdict_of(user_id))
    }

    /// All assessment records mentioning the user, ordered by window.
    pub fn history(&self, user_id: &str) -> Vec<AssessmentRecord> {
        self.windows
            .values()
            .flat_map(|w| w.records())
            .filter(|r| r.user_id == user_id)
            .collect()
    }

    /// Marks the user blacklisted and drops every trace of their answers:
    /// reports are removed (their ids remembered) and their consolidated rows
    /// are stripped from evaluated windows. Idempotent.
    pub fn purge_user(&mut self, user_id: &str) -> Result<(), LedgerError> {
        let profile = self
            .users
            .get_mut(user_id)
            .ok_or_else(|| LedgerError::UnknownUser(user_id.to_owned()))?;
        profile.blacklist();
        let doomed: Vec<String> = self
            .reports
            .values()
            .filter(|s| s.report.user_id == user_id)
            .map(|s| s.report.report_id.clone())
            .collect();
        for id in doomed {
            self.drop_report(&id);
        }
        for w in self.windows.values_mut() {
            w.rows.retain(|r| r.user_id != user_id);
        }
        Ok(())
    }

    fn drop_report(&mut self, report_id: &str) {
        if let Some(stored) = self.reports.remove(report_id) {
            if let Some(ids) = self.window_reports.get_mut(&stored.key()) {
                ids.remove(report_id);
                if ids.is_empty() {
                    self.window_reports.remove(&stored.key());
                }
            }
        }
        self.purged_reports.insert(report_id.to_owned());
    }

    /// Rejects events that would break the log's invariants.
    pub fn check(&self, event: &Event) -> Result<(), LedgerError> {
        match event {
            Event::UserRegistered(profile) => {
                if profile.user_id.is_empty() || profile.identity.is_empty() {
                    return Err(LedgerError::Invalid(
                        "user_id and identity are required".into(),
                    ));
                }
                if profile.is_blacklisted() {
                    return Err(LedgerError::Invalid("users register as active".into()));
                }
                if self.users.contains_key(&profile.user_id) {
                    return Err(LedgerError::DuplicateUser(profile.user_id.clone()));
                }
            }
            Event::ReportSubmitted(stored) => {
                let user = &stored.report.user_id;
                if !self.users.contains_key(user) {
                    return Err(LedgerError::UnknownUser(user.clone()));
                }
                if self.is_blacklisted(user) {
                    return Err(LedgerError::BlacklistedUser(user.clone()));
                }
                let id = &stored.report.report_id;
                if self.reports.contains_key(id) || self.purged_reports.contains(id) {
                    return Err(LedgerError::DuplicateReport(id.clone()));
                }
                validate_report(stored.report.clone(), self.schema())
                    .map_err(LedgerError::InvalidReport)?;
                if self
                    .context
                    .grid
                    .region_of(stored.report.latitude, stored.report.longitude)?
                    != stored.region
                {
                    return Err(LedgerError::Invalid(format!(
                        "report {id} filed under the wrong region"
                    )));
                }
                if self.windows.contains_key(&stored.key()) {
                    return Err(LedgerError::WindowClosed(stored.key()));
                }
            }
            Event::DetectionRun(window) => {
                let key = WindowKey {
                    region: window.region,
                    period: window.period,
                };
                if !self.context.grid.contains_region(key.region) {
                    return Err(LedgerError::UnknownRegion(key.region));
                }
                if self.windows.contains_key(&key) {
                    return Err(LedgerError::WindowClosed(key));
                }
            }
            Event::UserBlacklisted { user_id, .. } => {
                if !self.users.contains_key(user_id) {
                    return Err(LedgerError::UnknownUser(user_id.clone()));
                }
                if self.is_blacklisted(user_id) {
                    return Err(LedgerError::BlacklistedUser(user_id.clone()));
                }
            }
            Event::ReportTombstoned { user_id, .. } => {
                if !self.users.contains_key(user_id) {
                    return Err(LedgerError::UnknownUser(user_id.clone()));
                }
            }
            Event::UserPurged { user_id } => {
                if !self.is_blacklisted(user_id) {
                    return Err(LedgerError::Invalid(format!(
                        "purge marker for user {user_id} who is not blacklisted"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies an event that already passed [`Ledger::check`].
    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::UserRegistered(profile) => {
                self.users.insert(profile.user_id.clone(), profile.clone());
            }
            Event::ReportSubmitted(stored) => {
                self.window_reports
                    .entry(stored.key())
                    .or_default()
                    .insert(stored.report.report_id.clone());
                self.reports
                    .insert(stored.report.report_id.clone(), stored.clone());
            }
            Event::DetectionRun(window) => {
                let key = WindowKey {
                    region: window.region,
                    period: window.period,
                };
                self.windows.insert(key, window.clone());
            }
            Event::UserBlacklisted {
                user_id,
                region,
                period,
            } => {
                self.blacklisted_in.insert(
                    user_id.clone(),
                    WindowKey {
                        region: *region,
                        period: *period,
                    },
                );
                self.purge_user(user_id).expect("checked");
            }
            Event::ReportTombstoned { report_id, .. } => self.drop_report(report_id),
            Event::UserPurged { user_id } => self.purge_user(user_id).expect("checked"),
        }
    }

    pub fn check_and_apply(&mut self, event: &Event) -> Result<(), LedgerError> {
        self.check(event)?;
        self.apply(event);
        Ok(())
    }
}
