//! Malicious-contributor detection over one (region, period) window.
//!
//! Each user's submissions in a window are first collapsed to one value per
//! question, so flooding the window with duplicates cannot move the
//! statistics. Per question, values outside `[mean - 2 std, mean + 2 std]`
//! are outliers; a user whose outlier share exceeds one half is malicious.

mod consolidate;
mod detection;
mod stats;

pub use consolidate::{consolidate, ConsolidatedRow};
pub use detection::{
    assess, classify, evaluate_rows, run_detection, Assessment, AssessmentRecord, DetectionConfig,
    DetectionWindow, Verdict, MALICIOUS_RATIO, MIN_PARTICIPANTS,
};
pub use stats::{question_stats, valid_interval, QuestionStats, INTERVAL_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("empty input")]
    EmptyInput,
    #[error("reports belong to more than one user ({0} and {1})")]
    MixedUsers(String, String),
    #[error("no statistics for question {0}")]
    MissingStats(u32),
    #[error("user {0} appears more than once in the window")]
    DuplicateRow(String),
}
