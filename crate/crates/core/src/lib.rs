//! Trusted information acquisition from crowdsourced post-flood reports.
//!
//! Reports arrive from people in the affected area, are bucketed into
//! (region, period) windows, screened for malicious contributors with a
//! per-question 2-sigma outlier test, and the surviving answers are summarised
//! per region for relief organizations.

pub mod aggregation;
pub mod geo;
pub mod ledger;
pub mod report;
pub mod schema;
pub mod sim;
pub mod store;
pub mod trust;
pub mod user;

pub use geo::{GeoError, PeriodConfig, RegionGrid};
pub use report::{
    encode_answer, validate_report, AnswerValue, Attachment, MediaKind, Report, ReportViolation,
    ValidatedReport,
};
pub use schema::{Category, QuestionKind, QuestionSpec, QuestionnaireSchema, SchemaError};
pub use user::{UserProfile, UserStatus};
