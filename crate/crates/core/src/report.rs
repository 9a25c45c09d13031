//! Reports submitted by users and their validation against a schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{QuestionKind, QuestionSpec, QuestionnaireSchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerValue {
    /// 1-based option index.
    Chosen(u32),
    Skipped,
    FreeText(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Audio,
    Photo,
    Video,
}

/// Metadata for an uploaded file. The blob itself is stored elsewhere and is
/// never inspected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub question_id: u32,
    pub media_kind: MediaKind,
    pub byte_length: u64,
    pub blob_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub user_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub answers: Vec<AnswerValue>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl Report {
    /// Numeric encodings of the scored answers, keyed by question id.
    /// Assumes the report was validated against `schema`.
    pub fn encoded(&self, schema: &QuestionnaireSchema) -> Vec<(u32, Option<f64>)> {
        schema
            .questions()
            .iter()
            .zip(&self.answers)
            .filter(|(q, _)| q.is_scored())
            .map(|(q, a)| (q.id, encode_answer(q, a).ok().flatten()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("answer to question {question_id} does not fit the question: {reason}")]
pub struct TypeMismatch {
    pub question_id: u32,
    pub reason: String,
}

/// Maps an answer onto the numeric scale used by detection: option `k` is the
/// number `k`. Skips and free text carry no numeric value.
pub fn encode_answer(
    question: &QuestionSpec,
    answer: &AnswerValue,
) -> Result<Option<f64>, TypeMismatch> {
    let mismatch = |reason: String| TypeMismatch {
        question_id: question.id,
        reason,
    };
    match (question.kind, answer) {
        (_, AnswerValue::Skipped) => Ok(None),
        (QuestionKind::Scored, AnswerValue::Chosen(k)) => {
            if (1..=question.option_count).contains(k) {
                Ok(Some(f64::from(*k)))
            } else {
                Err(mismatch(format!(
                    "option {k} outside 1..={}",
                    question.option_count
                )))
            }
        }
        (QuestionKind::Scored, AnswerValue::FreeText(_)) => {
            Err(mismatch("free text on a scored question".into()))
        }
        (QuestionKind::Descriptive, AnswerValue::Chosen(_)) => {
            Err(mismatch("option chosen on a descriptive question".into()))
        }
        (QuestionKind::Descriptive, AnswerValue::FreeText(_)) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum ReportViolation {
    #[error("expected {expected} answers, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("question {question_id}: option {option} outside 1..={option_count}")]
    OptionOutOfRange {
        question_id: u32,
        option: u32,
        option_count: u32,
    },
    #[error("question {question_id}: {reason}")]
    KindMismatch { question_id: u32, reason: String },
    #[error("attachment references unknown question {question_id}")]
    UnknownAttachmentQuestion { question_id: u32 },
    #[error("report_id is empty")]
    EmptyReportId,
    #[error("user_id is empty")]
    EmptyUserId,
    #[error("coordinates are not finite")]
    NonFiniteCoordinates,
}

/// A report that passed [`validate_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedReport(Report);

impl ValidatedReport {
    pub fn into_inner(self) -> Report {
        self.0
    }
}

impl std::ops::Deref for ValidatedReport {
    type Target = Report;
    fn deref(&self) -> &Report {
        &self.0
    }
}

/// Checks a report against the schema, collecting every violation.
pub fn validate_report(
    report: Report,
    schema: &QuestionnaireSchema,
) -> Result<ValidatedReport, Vec<ReportViolation>> {
    let mut violations = Vec::new();
    if report.report_id.is_empty() {
        violations.push(ReportViolation::EmptyReportId);
    }
    if report.user_id.is_empty() {
        violations.push(ReportViolation::EmptyUserId);
    }
    if !report.latitude.is_finite() || !report.longitude.is_finite() {
        violations.push(ReportViolation::NonFiniteCoordinates);
    }
    if report.answers.len() != schema.len() {
        violations.push(ReportViolation::LengthMismatch {
            expected: schema.len(),
            actual: report.answers.len(),
        });
    }
    for (q, a) in schema.questions().iter().zip(&report.answers) {
        match (q.kind, a) {
            (QuestionKind::Scored, AnswerValue::Chosen(k)) if !(1..=q.option_count).contains(k) => {
                violations.push(ReportViolation::OptionOutOfRange {
                    question_id: q.id,
                    option: *k,
                    option_count: q.option_count,
                })
            }
            _ => {
                if let Err(e) = encode_answer(q, a) {
                    violations.push(ReportViolation::KindMismatch {
                        question_id: q.id,
                        reason: e.reason,
                    });
                }
            }
        }
    }
    for att in &report.attachments {
        if schema.question(att.question_id).is_none() {
            violations.push(ReportViolation::UnknownAttachmentQuestion {
                question_id: att.question_id,
            });
        }
    }
    if violations.is_empty() {
        Ok(ValidatedReport(report))
    } else {
        Err(violations)
    }
}
