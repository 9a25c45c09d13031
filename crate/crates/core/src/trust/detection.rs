use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ConsolidatedRow, QuestionStats, TrustError};

/// Fewest distinct users for which a window is evaluated at all.
pub const MIN_PARTICIPANTS: usize = 5;

/// Outlier share above which a user is malicious. A share of exactly this
/// value is still non-malicious.
pub const MALICIOUS_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    NonMalicious,
    Malicious,
    /// The window was too small to evaluate, or the user answered nothing.
    Unvetted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub user_id: String,
    pub answered: usize,
    pub outliers: usize,
    pub ratio: f64,
    pub verdict: Verdict,
}

pub fn classify(answered: usize, outliers: usize) -> Verdict {
    if answered == 0 {
        Verdict::Unvetted
    } else if outliers as f64 / answered as f64 > MALICIOUS_RATIO {
        Verdict::Malicious
    } else {
        Verdict::NonMalicious
    }
}

/// Counts the row's answers that fall outside their question's valid interval.
pub fn assess(
    row: &ConsolidatedRow,
    stats: &BTreeMap<u32, QuestionStats>,
) -> Result<Assessment, TrustError> {
    let mut answered = 0;
    let mut outliers = 0;
    for (qid, value) in row.answered() {
        let st = stats.get(&qid).ok_or(TrustError::MissingStats(qid))?;
        answered += 1;
        if !st.contains(value) {
            outliers += 1;
        }
    }
    let ratio = if answered == 0 {
        0.0
    } else {
        outliers as f64 / answered as f64
    };
    Ok(Assessment {
        user_id: row.user_id.clone(),
        answered,
        outliers,
        ratio,
        verdict: classify(answered, outliers),
    })
}

/// One statistics pass over the given rows with no participation gate.
/// Stats come back ordered by question id, assessments in row order.
pub fn evaluate_rows<'a, I>(rows: I) -> (Vec<QuestionStats>, Vec<Assessment>)
where
    I: IntoIterator<Item = &'a ConsolidatedRow>,
    I::IntoIter: Clone,
{
    let rows = rows.into_iter();
    let mut columns: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for row in rows.clone() {
        for (qid, v) in row.answered() {
            columns.entry(qid).or_default().push(v);
        }
    }
    let stats: BTreeMap<u32, QuestionStats> = columns
        .iter()
        .map(|(q, vals)| {
            let st = QuestionStats::compute(*q, vals).expect("column is non-empty");
            (*q, st)
        })
        .collect();
    let assessments = rows
        .map(|row| assess(row, &stats).expect("stats cover every answered question"))
        .collect();
    (stats.into_values().collect(), assessments)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Re-run statistics without flagged users until nobody new is flagged.
    #[serde(default)]
    pub iterative_detection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindow {
    pub region: usize,
    pub period: u64,
    pub rows: Vec<ConsolidatedRow>,
    pub executed: bool,
    pub stats: Vec<QuestionStats>,
    pub assessments: Vec<Assessment>,
}

impl DetectionWindow {
    /// Rows are kept sorted by user id so results do not depend on input order.
    pub fn new(
        region: usize,
        period: u64,
        mut rows: Vec<ConsolidatedRow>,
    ) -> Result<Self, TrustError> {
        rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        if let Some(w) = rows.windows(2).find(|w| w[0].user_id == w[1].user_id) {
            return Err(TrustError::DuplicateRow(w[0].user_id.clone()));
        }
        Ok(Self {
            region,
            period,
            rows,
            executed: false,
            stats: Vec::new(),
            assessments: Vec::new(),
        })
    }

    pub fn participants(&self) -> usize {
        self.rows.len()
    }

    pub fn verdict_of(&self, user_id: &str) -> Option<Verdict> {
        if let Some(a) = self.assessments.iter().find(|a| a.user_id == user_id) {
            return Some(a.verdict);
        }
        let present = self.rows.iter().any(|r| r.user_id == user_id);
        (present && !self.executed).then_some(Verdict::Unvetted)
    }

    pub fn malicious_users(&self) -> impl Iterator<Item = &str> {
        self.assessments
            .iter()
            .filter(|a| a.verdict == Verdict::Malicious)
            .map(|a| a.user_id.as_str())
    }

    /// Flat export, one record per participant. Users of a window that did
    /// not run are reported as unvetted with zero outliers.
    pub fn records(&self) -> Vec<AssessmentRecord> {
        let mk = |a: &Assessment| AssessmentRecord {
            region: self.region,
            period: self.period,
            user_id: a.user_id.clone(),
            answered: a.answered,
            outliers: a.outliers,
            ratio: a.ratio,
            verdict: a.verdict,
        };
        if self.executed {
            self.assessments.iter().map(mk).collect()
        } else {
            self.rows
                .iter()
                .map(|r| {
                    mk(&Assessment {
                        user_id: r.user_id.clone(),
                        answered: r.answered_count(),
                        outliers: 0,
                        ratio: 0.0,
                        verdict: Verdict::Unvetted,
                    })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub region: usize,
    pub period: u64,
    pub user_id: String,
    pub answered: usize,
    pub outliers: usize,
    pub ratio: f64,
    pub verdict: Verdict,
}

/// Evaluates a window. Below [`MIN_PARTICIPANTS`] distinct users nothing is
/// computed and every participant stays unvetted.
pub fn run_detection(mut window: DetectionWindow, cfg: &DetectionConfig) -> DetectionWindow {
    window.rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    window.stats.clear();
    window.assessments.clear();
    window.executed = window.participants() >= MIN_PARTICIPANTS;
    if !window.executed {
        return window;
    }

    let mut excluded: BTreeMap<String, Assessment> = BTreeMap::new();
    loop {
        let active: Vec<&ConsolidatedRow> = window
            .rows
            .iter()
            .filter(|r| !excluded.contains_key(&r.user_id))
            .collect();
        let (stats, assessments) = evaluate_rows(active.iter().copied());
        let flagged: BTreeSet<String> = assessments
            .iter()
            .filter(|a| a.verdict == Verdict::Malicious)
            .map(|a| a.user_id.clone())
            .collect();
        let stop = !cfg.iterative_detection
            || flagged.is_empty()
            || active.len() - flagged.len() < MIN_PARTICIPANTS;
        if stop {
            let mut all: Vec<Assessment> = excluded.into_values().chain(assessments).collect();
            all.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            window.stats = stats;
            window.assessments = all;
            return window;
        }
        for a in assessments {
            if flagged.contains(&a.user_id) {
                excluded.insert(a.user_id.clone(), a);
            }
        }
    }
}
