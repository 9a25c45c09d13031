//! Per-region need summaries built only from trusted answers.
//!
//! An answer is trusted when its author was assessed non-malicious in the
//! window the report was filed under and has not been blacklisted since.
//! Summaries count raw submitted options, not consolidated averages.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Ledger, StoredReport};
use crate::report::{AnswerValue, Attachment};
use crate::schema::{Category, QuestionnaireSchema};
use crate::trust::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("unknown region {0}")]
    UnknownRegion(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub question_id: u32,
    pub category: Category,
    pub option_count: u32,
    /// Option -> number of trusted answers choosing it. Zero counts omitted.
    pub histogram: BTreeMap<u32, u64>,
    /// Most chosen option; ties go to the lowest option.
    pub mode: Option<u32>,
    /// Trusted answers counted, equal to the histogram total.
    pub respondent_count: u64,
}

impl QuestionSummary {
    fn empty(question_id: u32, category: Category, option_count: u32) -> Self {
        Self {
            question_id,
            category,
            option_count,
            histogram: BTreeMap::new(),
            mode: None,
            respondent_count: 0,
        }
    }

    fn add(&mut self, option: u32) {
        *self.histogram.entry(option).or_default() += 1;
        self.respondent_count += 1;
    }

    fn finish(&mut self) {
        // max_by_key keeps the last maximum, so walk options high to low.
        self.mode = self
            .histogram
            .iter()
            .rev()
            .max_by_key(|(_, count)| **count)
            .map(|(option, _)| *option);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextExcerpt {
    pub report_id: String,
    pub user_id: String,
    pub question_id: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentRef {
    pub report_id: String,
    pub user_id: String,
    #[serde(flatten)]
    pub attachment: Attachment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub region: usize,
    /// Inclusive period range.
    pub period_from: u64,
    pub period_to: u64,
    pub questions: Vec<QuestionSummary>,
    pub free_text: Vec<FreeTextExcerpt>,
    pub attachments: Vec<AttachmentRef>,
    /// Distinct users whose reports sat in windows too small to evaluate.
    pub unvetted_users: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: Category,
    pub questions: Vec<QuestionSummary>,
}

/// Who contributed to each histogram bucket, keyed by (question, option).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub buckets: BTreeMap<(u32, u32), Vec<(String, String)>>,
}

impl Provenance {
    pub fn users(&self) -> BTreeSet<&str> {
        self.buckets
            .values()
            .flatten()
            .map(|(_, user)| user.as_str())
            .collect()
    }
}

pub fn aggregate_region(
    ledger: &Ledger,
    region: usize,
    period_from: u64,
    period_to: u64,
) -> Result<AggregateReport, AggregationError> {
    aggregate_region_traced(ledger, region, period_from, period_to).map(|(r, _)| r)
}

/// Same as [`aggregate_region`], also returning which report fed each bucket.
pub fn aggregate_region_traced(
    ledger: &Ledger,
    region: usize,
    period_from: u64,
    period_to: u64,
) -> Result<(AggregateReport, Provenance), AggregationError> {
    if !ledger.context().grid.contains_region(region) {
        return Err(AggregationError::UnknownRegion(region));
    }
    let schema = ledger.schema();
    let mut summaries: BTreeMap<u32, QuestionSummary> = schema
        .scored()
        .map(|q| {
            (
                q.id,
                QuestionSummary::empty(q.id, q.category, q.option_count),
            )
        })
        .collect();
    let mut provenance = Provenance::default();
    let mut free_text = Vec::new();
    let mut attachments = Vec::new();
    let mut unvetted: BTreeSet<&str> = BTreeSet::new();

    let keys = ledger
        .report_windows()
        .filter(|k| k.region == region && (period_from..=period_to).contains(&k.period));
    for key in keys {
        // Windows not yet evaluated contribute nothing.
        let Some(window) = ledger.window(key) else {
            continue;
        };
        for stored in ledger.reports_in(key) {
            let user = stored.report.user_id.as_str();
            if ledger.is_blacklisted(user) {
                continue;
            }
            match window.verdict_of(user) {
                Some(Verdict::NonMalicious) => {
                    include(
                        schema,
                        stored,
                        &mut summaries,
                        &mut provenance,
                        &mut free_text,
                        &mut attachments,
                    );
                }
                Some(Verdict::Unvetted) => {
                    unvetted.insert(user);
                }
                _ => {}
            }
        }
    }

    let mut questions: Vec<QuestionSummary> = summaries.into_values().collect();
    questions.iter_mut().for_each(QuestionSummary::finish);
    Ok((
        AggregateReport {
            region,
            period_from,
            period_to,
            questions,
            free_text,
            attachments,
            unvetted_users: unvetted.len(),
        },
        provenance,
    ))
}

fn include(
    schema: &QuestionnaireSchema,
    stored: &StoredReport,
    summaries: &mut BTreeMap<u32, QuestionSummary>,
    provenance: &mut Provenance,
    free_text: &mut Vec<FreeTextExcerpt>,
    attachments: &mut Vec<AttachmentRef>,
) {
    let report = &stored.report;
    for (q, answer) in schema.questions().iter().zip(&report.answers) {
        match answer {
            AnswerValue::Chosen(option) => {
                if let Some(summary) = summaries.get_mut(&q.id) {
                    summary.add(*option);
                    provenance
                        .buckets
                        .entry((q.id, *option))
                        .or_default()
                        .push((report.report_id.clone(), report.user_id.clone()));
                }
            }
            AnswerValue::FreeText(text) => free_text.push(FreeTextExcerpt {
                report_id: report.report_id.clone(),
                user_id: report.user_id.clone(),
                question_id: q.id,
                text: text.clone(),
            }),
            AnswerValue::Skipped => {}
        }
    }
    attachments.extend(report.attachments.iter().map(|a| AttachmentRef {
        report_id: report.report_id.clone(),
        user_id: report.user_id.clone(),
        attachment: a.clone(),
    }));
}

/// Groups question summaries by need category. All four categories are
/// always present, in their canonical order; questions keep report order.
pub fn category_rollup(report: &AggregateReport) -> Vec<CategorySummary> {
    Category::ALL
        .iter()
        .map(|&category| CategorySummary {
            category,
            questions: report
                .questions
                .iter()
                .filter(|q| q.category == category)
                .cloned()
                .collect(),
        })
        .collect()
}

/// JSON export layout: summaries grouped by category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateDocument {
    pub region: usize,
    pub period_from: u64,
    pub period_to: u64,
    pub unvetted_users: usize,
    pub categories: Vec<CategorySummary>,
    pub free_text: Vec<FreeTextExcerpt>,
    pub attachments: Vec<AttachmentRef>,
}

impl From<&AggregateReport> for AggregateDocument {
    fn from(r: &AggregateReport) -> Self {
        Self {
            region: r.region,
            period_from: r.period_from,
            period_to: r.period_to,
            unvetted_users: r.unvetted_users,
            categories: category_rollup(r),
            free_text: r.free_text.clone(),
            attachments: r.attachments.clone(),
        }
    }
}

pub fn to_json(report: &AggregateReport) -> String {
    serde_json::to_string_pretty(&AggregateDocument::from(report)).expect("serialisable")
}

/// One CSV row per question: region, question_id, category, mode,
/// count_1..count_K, respondent_count, unvetted_users. K is the widest
/// option count among the report's questions.
pub fn to_csv(report: &AggregateReport) -> String {
    let width = report
        .questions
        .iter()
        .map(|q| q.option_count)
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["region", "question_id", "category", "mode"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=width).map(|k| format!("count_{k}")));
    header.push("respondent_count".into());
    header.push("unvetted_users".into());
    w.write_record(&header).expect("in-memory write");
    for q in &report.questions {
        let mut row = vec![
            report.region.to_string(),
            q.question_id.to_string(),
            q.category.to_string(),
            q.mode.map(|m| m.to_string()).unwrap_or_default(),
        ];
        row.extend((1..=width).map(|k| {
            if k <= q.option_count {
                q.histogram.get(&k).copied().unwrap_or(0).to_string()
            } else {
                String::new()
            }
        }));
        row.push(q.respondent_count.to_string());
        row.push(report.unvetted_users.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::PeriodConfig;
    use crate::ledger::{LedgerContext, WindowKey};
    use crate::report::Report;
    use crate::store::Event;
    use crate::trust::{run_detection, DetectionConfig};
    use crate::user::UserProfile;

    fn ledger() -> Ledger {
        Ledger::new(LedgerContext {
            schema: QuestionnaireSchema::default_flood(),
            grid: "0,1,0,1,1,2".parse().unwrap(),
            period: PeriodConfig::default(),
        })
    }

    fn answers(q1: u32, rest: u32) -> Vec<AnswerValue> {
        QuestionnaireSchema::default_flood()
            .questions()
            .iter()
            .map(|q| match (q.id, q.is_scored()) {
                (1, _) => AnswerValue::Chosen(q1),
                (_, true) => AnswerValue::Chosen(rest.min(q.option_count)),
                _ => AnswerValue::FreeText(format!("text from q{}", q.id)),
            })
            .collect()
    }

    fn add(l: &mut Ledger, user: &str, answers: Vec<AnswerValue>) {
        if l.user(user).is_none() {
            l.check_and_apply(&Event::UserRegistered(UserProfile::new(user, "id")))
                .unwrap();
        }
        let report = Report {
            report_id: format!("{user}-{}", l.reports().count()),
            user_id: user.into(),
            latitude: 0.5,
            longitude: 0.2,
            timestamp: 100,
            answers,
            attachments: vec![],
        };
        let p = l.place(&report).unwrap();
        l.check_and_apply(&Event::ReportSubmitted(StoredReport {
            report,
            region: p.region,
            period: p.period,
            late: p.late,
        }))
        .unwrap();
    }

    fn detect(l: &mut Ledger) {
        let key = WindowKey {
            region: 0,
            period: 0,
        };
        let w = run_detection(l.build_window(key).unwrap(), &DetectionConfig::default());
        let bad: Vec<String> = w.malicious_users().map(str::to_owned).collect();
        l.check_and_apply(&Event::DetectionRun(w)).unwrap();
        for u in bad {
            l.check_and_apply(&Event::UserBlacklisted {
                user_id: u,
                region: 0,
                period: 0,
            })
            .unwrap();
        }
    }

    #[test]
    fn unknown_region() {
        assert_eq!(
            aggregate_region(&ledger(), 2, 0, 0),
            Err(AggregationError::UnknownRegion(2))
        );
    }

    #[test]
    fn fresh_region_is_empty() {
        let r = aggregate_region(&ledger(), 1, 0, 10).unwrap();
        assert_eq!(r.questions.len(), 15);
        assert!(r
            .questions
            .iter()
            .all(|q| q.respondent_count == 0 && q.mode.is_none()));
        assert_eq!(r.unvetted_users, 0);
    }

    #[test]
    fn honest_answers_are_counted() {
        let mut l = ledger();
        for i in 0..5 {
            add(&mut l, &format!("u{i}"), answers(2, 2));
        }
        detect(&mut l);
        let r = aggregate_region(&l, 0, 0, 0).unwrap();
        let q1 = &r.questions[0];
        assert_eq!(q1.histogram, BTreeMap::from([(2, 5)]));
        assert_eq!(q1.mode, Some(2));
        assert_eq!(q1.respondent_count, 5);
        assert_eq!(r.free_text.len(), 10);
    }

    #[test]
    fn ties_break_low() {
        let mut l = ledger();
        for (i, opt) in [1, 3, 1, 3, 2].iter().enumerate() {
            add(&mut l, &format!("u{i}"), answers(*opt, 2));
        }
        detect(&mut l);
        let r = aggregate_region(&l, 0, 0, 0).unwrap();
        assert_eq!(r.questions[0].mode, Some(1));
    }

    #[test]
    fn malicious_users_are_excluded() {
        let mut l = ledger();
        for i in 0..9 {
            add(&mut l, &format!("h{i}"), answers(5, 1));
        }
        add(&mut l, "bad", answers(10, 2));
        detect(&mut l);
        assert!(l.is_blacklisted("bad"));
        let (r, prov) = aggregate_region_traced(&l, 0, 0, 0).unwrap();
        assert_eq!(r.questions[0].histogram, BTreeMap::from([(5, 9)]));
        assert!(!prov.users().contains("bad"));
        assert!(r.free_text.iter().all(|t| t.user_id != "bad"));
    }

    #[test]
    fn only_malicious_region_is_empty() {
        let mut l = ledger();
        for i in 0..9 {
            add(&mut l, &format!("h{i}"), answers(5, 1));
        }
        add(&mut l, "bad", answers(10, 2));
        detect(&mut l);
        // Every honest user leaves: only the blacklisted user's data could remain.
        let mut only_bad = l.clone();
        for i in 0..9 {
            only_bad.purge_user(&format!("h{i}")).unwrap();
        }
        let r = aggregate_region(&only_bad, 0, 0, 0).unwrap();
        assert!(r
            .questions
            .iter()
            .all(|q| q.histogram.is_empty() && q.respondent_count == 0));
    }

    #[test]
    fn gated_window_counts_unvetted() {
        let mut l = ledger();
        for i in 0..3 {
            add(&mut l, &format!("u{i}"), answers(2, 2));
        }
        add(&mut l, "u0", answers(3, 2));
        detect(&mut l);
        let r = aggregate_region(&l, 0, 0, 0).unwrap();
        assert_eq!(r.unvetted_users, 3);
        assert!(r.questions.iter().all(|q| q.respondent_count == 0));
    }

    #[test]
    fn pending_windows_are_invisible() {
        let mut l = ledger();
        for i in 0..6 {
            add(&mut l, &format!("u{i}"), answers(2, 2));
        }
        let r = aggregate_region(&l, 0, 0, 0).unwrap();
        assert_eq!(r.unvetted_users, 0);
        assert!(r.questions.iter().all(|q| q.respondent_count == 0));
    }

    #[test]
    fn rollup() {
        let mut l = ledger();
        for i in 0..5 {
            add(&mut l, &format!("u{i}"), answers(2, 2));
        }
        detect(&mut l);
        let r = aggregate_region(&l, 0, 0, 0).unwrap();
        let cats = category_rollup(&r);
        assert_eq!(cats.len(), 4);
        let medical = &cats[2];
        assert_eq!(medical.category, Category::Medical);
        let ids: Vec<u32> = medical.questions.iter().map(|q| q.question_id).collect();
        assert_eq!(ids, vec![9, 10, 11]);

        let empty = AggregateReport {
            region: 0,
            period_from: 0,
            period_to: 0,
            questions: vec![],
            free_text: vec![],
            attachments: vec![],
            unvetted_users: 0,
        };
        let cats = category_rollup(&empty);
        assert_eq!(cats.len(), 4);
        assert!(cats.iter().all(|c| c.questions.is_empty()));
    }

    #[test]
    fn csv_layout() {
        let mut l = ledger();
        for i in 0..5 {
            add(&mut l, &format!("u{i}"), answers(2, 2));
        }
        detect(&mut l);
        let csv = to_csv(&aggregate_region(&l, 0, 0, 0).unwrap());
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("region,question_id,category,mode,count_1,"));
        assert!(header.ends_with("count_10,respondent_count,unvetted_users"));
        assert_eq!(
            lines.next().unwrap(),
            "0,1,Victim,2,0,5,0,0,0,0,0,0,0,0,5,0"
        );
        // A two-option question leaves the wider columns blank.
        assert_eq!(lines.nth(1).unwrap(), "0,3,Victim,2,0,5,,,,,,,,,5,0");
    }
}
