use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrustError;
use crate::report::Report;
use crate::schema::QuestionnaireSchema;

/// One user's contribution to a window: a single value per scored question.
/// `None` means every submission in the window skipped that question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedRow {
    pub user_id: String,
    pub values: BTreeMap<u32, Option<f64>>,
}

impl ConsolidatedRow {
    pub fn answered(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().filter_map(|(q, v)| v.map(|v| (*q, v)))
    }

    pub fn answered_count(&self) -> usize {
        self.answered().count()
    }
}

/// Averages one user's submissions within a window, question by question.
/// Skipped answers are left out of the average.
pub fn consolidate<'a, I>(
    reports: I,
    schema: &QuestionnaireSchema,
) -> Result<ConsolidatedRow, TrustError>
where
    I: IntoIterator<Item = &'a Report>,
{
    let mut user: Option<&str> = None;
    let mut sums: BTreeMap<u32, (f64, u32)> = schema.scored().map(|q| (q.id, (0.0, 0))).collect();
    for report in reports {
        match user {
            None => user = Some(&report.user_id),
            Some(u) if u != report.user_id => {
                return Err(TrustError::MixedUsers(u.to_owned(), report.user_id.clone()))
            }
            Some(_) => {}
        }
        for (qid, value) in report.encoded(schema) {
            if let (Some(v), Some(acc)) = (value, sums.get_mut(&qid)) {
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }
    let user_id = user.ok_or(TrustError::EmptyInput)?.to_owned();
    let values = sums
        .into_iter()
        .map(|(q, (sum, n))| (q, (n > 0).then(|| sum / f64::from(n))))
        .collect();
    Ok(ConsolidatedRow { user_id, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::AnswerValue;

    fn report(user: &str, q1: AnswerValue) -> Report {
        let schema = QuestionnaireSchema::default_flood();
        let mut answers = vec![AnswerValue::Skipped; schema.len()];
        answers[0] = q1;
        Report {
            report_id: format!("{user}-{answers:?}"),
            user_id: user.into(),
            latitude: 0.0,
            longitude: 0.0,
            timestamp: 0,
            answers,
            attachments: vec![],
        }
    }

    #[test]
    fn single_submission_is_identity() {
        let s = QuestionnaireSchema::default_flood();
        let row = consolidate([&report("a", AnswerValue::Chosen(2))], &s).unwrap();
        assert_eq!(row.values[&1], Some(2.0));
        assert_eq!(row.values[&2], None);
        assert_eq!(row.values.len(), 15);
        assert_eq!(row.answered_count(), 1);
    }

    #[test]
    fn averages_repeated_submissions() {
        let s = QuestionnaireSchema::default_flood();
        let rs = [
            report("a", AnswerValue::Chosen(1)),
            report("a", AnswerValue::Chosen(2)),
        ];
        assert_eq!(consolidate(&rs, &s).unwrap().values[&1], Some(1.5));
    }

    #[test]
    fn skips_do_not_dilute() {
        let s = QuestionnaireSchema::default_flood();
        let rs = [
            report("a", AnswerValue::Chosen(3)),
            report("a", AnswerValue::Skipped),
        ];
        assert_eq!(consolidate(&rs, &s).unwrap().values[&1], Some(3.0));
    }

    #[test]
    fn descriptive_questions_are_not_rows() {
        let s = QuestionnaireSchema::default_flood();
        let row = consolidate([&report("a", AnswerValue::Chosen(1))], &s).unwrap();
        assert!(!row.values.contains_key(&16) && !row.values.contains_key(&17));
    }

    #[test]
    fn errors() {
        let s = QuestionnaireSchema::default_flood();
        assert_eq!(consolidate(&[], &s), Err(TrustError::EmptyInput));
        let rs = [
            report("a", AnswerValue::Skipped),
            report("b", AnswerValue::Skipped),
        ];
        assert!(matches!(
            consolidate(&rs, &s),
            Err(TrustError::MixedUsers(..))
        ));
    }
}
