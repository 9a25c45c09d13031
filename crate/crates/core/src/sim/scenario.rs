use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::behavior::{answer, BehaviorType};
use super::SimError;
use crate::report::{AnswerValue, Report};
use crate::schema::QuestionnaireSchema;
use crate::trust::{consolidate, run_detection, DetectionConfig, DetectionWindow, Verdict};

/// Scenario as written on disk. `schema` is a path relative to the scenario
/// file; omitted means the bundled questionnaire. Omitting `truth` selects
/// the middle option of every scored question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub truth: Option<BTreeMap<u32, u32>>,
    pub counts: BTreeMap<BehaviorType, u32>,
    #[serde(default = "default_regions")]
    pub regions: Vec<usize>,
    #[serde(default = "one")]
    pub periods: u64,
    #[serde(default = "one_u32")]
    pub submissions_per_user_per_period: u32,
    #[serde(default)]
    pub iterative_detection: bool,
}

fn default_regions() -> Vec<usize> {
    vec![0]
}

fn one() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SimError::Io(path.as_ref().display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SimError::InvalidScenario(e.to_string()))
    }

    /// Loads the referenced schema and checks the scenario.
    pub fn resolve(&self, base_dir: &Path) -> Result<ScenarioConfig, SimError> {
        let schema = match &self.schema {
            None => QuestionnaireSchema::default_flood(),
            Some(p) => QuestionnaireSchema::load(base_dir.join(p))
                .map_err(|e| SimError::InvalidScenario(e.to_string()))?,
        };
        let truth = match &self.truth {
            None => middle_truth(&schema),
            Some(t) => t.clone(),
        };
        let cfg = ScenarioConfig {
            seed: self.seed,
            schema,
            truth,
            counts: self.counts.clone(),
            regions: self.regions.clone(),
            periods: self.periods,
            submissions_per_user_per_period: self.submissions_per_user_per_period,
            detection: DetectionConfig {
                iterative_detection: self.iterative_detection,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `ceil(option_count / 2)` for every scored question.
pub fn middle_truth(schema: &QuestionnaireSchema) -> BTreeMap<u32, u32> {
    schema
        .scored()
        .map(|q| (q.id, q.option_count.div_ceil(2)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub schema: QuestionnaireSchema,
    /// Correct option per scored question.
    pub truth: BTreeMap<u32, u32>,
    pub counts: BTreeMap<BehaviorType, u32>,
    pub regions: Vec<usize>,
    pub periods: u64,
    pub submissions_per_user_per_period: u32,
    pub detection: DetectionConfig,
}

impl ScenarioConfig {
    /// Default questionnaire, middle-option truth, one region and period.
    pub fn new(seed: u64, counts: BTreeMap<BehaviorType, u32>) -> Self {
        let schema = QuestionnaireSchema::default_flood();
        Self {
            seed,
            truth: middle_truth(&schema),
            schema,
            counts,
            regions: vec![0],
            periods: 1,
            submissions_per_user_per_period: 1,
            detection: DetectionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for q in self.schema.scored() {
            match self.truth.get(&q.id) {
                None => {
                    return Err(SimError::InvalidScenario(format!(
                        "no truth for question {}",
                        q.id
                    )))
                }
                Some(t) if !(1..=q.option_count).contains(t) => {
                    return Err(SimError::InvalidScenario(format!(
                        "truth {t} for question {} outside 1..={}",
                        q.id, q.option_count
                    )))
                }
                _ => {}
            }
        }
        if let Some(q) = self
            .truth
            .keys()
            .find(|q| !self.schema.scored().any(|s| s.id == **q))
        {
            return Err(SimError::InvalidScenario(format!(
                "truth given for question {q}, which is not a scored question"
            )));
        }
        if self.counts.values().map(|c| u64::from(*c)).sum::<u64>() == 0 {
            return Err(SimError::InvalidScenario("population is empty".into()));
        }
        if self.regions.is_empty() {
            return Err(SimError::InvalidScenario("no regions".into()));
        }
        if self.periods == 0 || self.submissions_per_user_per_period == 0 {
            return Err(SimError::InvalidScenario(
                "periods and submissions_per_user_per_period must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Users in generation order: behaviour order, then index within type.
    pub fn population(&self) -> Vec<SimUser> {
        let mut out = Vec::new();
        for b in BehaviorType::ALL {
            for i in 0..self.counts.get(&b).copied().unwrap_or(0) {
                let index = out.len();
                out.push(SimUser {
                    index,
                    user_id: format!("{}-{i:03}", b.slug()),
                    behavior: b,
                    region: self.regions[index % self.regions.len()],
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimUser {
    /// Global index; also the user's RNG stream id.
    pub index: usize,
    pub user_id: String,
    pub behavior: BehaviorType,
    pub region: usize,
}

/// Generator for one user. Every user draws from its own ChaCha8 stream of
/// the scenario seed, so one user's draws never depend on another's.
pub fn user_rng(seed: u64, user_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user_id: String,
    pub behavior: BehaviorType,
    pub region: usize,
    pub expected_malicious: bool,
    /// Answered questions summed over evaluated windows.
    pub answered: usize,
    pub valid: usize,
    pub outliers: usize,
    pub ratio: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub behavior: BehaviorType,
    pub users: usize,
    pub mean_answered: f64,
    pub mean_valid: f64,
    pub mean_outliers: f64,
    pub mean_ratio: f64,
    pub malicious: usize,
    pub flag_rate: f64,
}

/// Rows: expected label; columns: predicted Malicious or not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn record(&mut self, expected_malicious: bool, flagged: bool) {
        match (expected_malicious, flagged) {
            (true, true) => self.true_positive += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (true, false) => self.false_negative += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
        self.false_negative += other.false_negative;
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// `None` when nobody was flagged.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    /// `None` when no user was expected malicious.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    /// `None` when no user was expected honest.
    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(
            self.false_positive,
            self.false_positive + self.true_negative,
        )
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub users: Vec<UserOutcome>,
    pub per_type: Vec<TypeSummary>,
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub false_positive_rate: Option<f64>,
    /// Every window evaluated, in evaluation order.
    #[serde(skip)]
    pub windows: Vec<DetectionWindow>,
}

impl SimulationResult {
    pub fn type_summary(&self, behavior: BehaviorType) -> Option<&TypeSummary> {
        self.per_type.iter().find(|t| t.behavior == behavior)
    }

    /// Per-user CSV.
    pub fn users_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "user_id", "behavior", "region", "expected", "answered", "valid", "outliers", "ratio",
            "verdict",
        ])
        .expect("in-memory write");
        for u in &self.users {
            w.write_record([
                u.user_id.clone(),
                u.behavior.to_string(),
                u.region.to_string(),
                if u.expected_malicious {
                    "Malicious"
                } else {
                    "NonMalicious"
                }
                .to_owned(),
                u.answered.to_string(),
                u.valid.to_string(),
                u.outliers.to_string(),
                format!("{:.6}", u.ratio),
                format!("{:?}", u.verdict),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }
}

/// Generates every report of the scenario, in (user, period, submission)
/// order. Descriptive questions are skipped.
pub fn generate_reports(cfg: &ScenarioConfig) -> Vec<(SimUser, u64, Report)> {
    let mut out = Vec::new();
    for user in cfg.population() {
        let mut rng = user_rng(cfg.seed, user.index);
        for period in 0..cfg.periods {
            for sub in 0..cfg.submissions_per_user_per_period {
                let answers = cfg
                    .schema
                    .questions()
                    .iter()
                    .map(|q| {
                        if q.is_scored() {
                            AnswerValue::Chosen(answer(
                                user.behavior,
                                q,
                                cfg.truth[&q.id],
                                &mut rng,
                            ))
                        } else {
                            AnswerValue::Skipped
                        }
                    })
                    .collect();
                let report = Report {
                    report_id: format!("{}-p{period}-s{sub}", user.user_id),
                    user_id: user.user_id.clone(),
                    latitude: 0.0,
                    longitude: 0.0,
                    timestamp: period as i64 * 3600 + i64::from(sub),
                    answers,
                    attachments: Vec::new(),
                };
                out.push((user.clone(), period, report));
            }
        }
    }
    out
}

/// Runs a scenario: generate, then detect window by window (period-major,
/// then region), blacklisting flagged users for the remaining periods.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimulationResult, SimError> {
    cfg.validate()?;
    let population = cfg.population();
    let reports = generate_reports(cfg);

    let mut by_window: BTreeMap<(u64, usize), BTreeMap<&str, Vec<&Report>>> = BTreeMap::new();
    for (user, period, report) in &reports {
        by_window
            .entry((*period, user.region))
            .or_default()
            .entry(user.user_id.as_str())
            .or_default()
            .push(report);
    }

    let mut blacklisted: BTreeSet<String> = BTreeSet::new();
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut windows = Vec::new();
    for ((period, region), users) in &by_window {
        let rows = users
            .iter()
            .filter(|(u, _)| !blacklisted.contains(**u))
            .map(|(_, rs)| consolidate(rs.iter().copied(), &cfg.schema))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let window = DetectionWindow::new(*region, *period, rows)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let window = run_detection(window, &cfg.detection);
        for a in &window.assessments {
            let t = tallies.entry(a.user_id.clone()).or_default();
            t.answered += a.answered;
            t.outliers += a.outliers;
            match a.verdict {
                Verdict::Malicious => {
                    t.malicious = true;
                    blacklisted.insert(a.user_id.clone());
                }
                Verdict::NonMalicious => t.vetted = true,
                Verdict::Unvetted => {}
            }
        }
        windows.push(window);
    }

    let users: Vec<UserOutcome> = population
        .iter()
        .map(|u| {
            let t = tallies.get(&u.user_id).cloned().unwrap_or_default();
            let verdict = if t.malicious {
                Verdict::Malicious
            } else if t.vetted {
                Verdict::NonMalicious
            } else {
                Verdict::Unvetted
            };
            UserOutcome {
                user_id: u.user_id.clone(),
                behavior: u.behavior,
                region: u.region,
                expected_malicious: u.behavior.expected_malicious(),
                answered: t.answered,
                valid: t.answered - t.outliers,
                outliers: t.outliers,
                ratio: if t.answered == 0 {
                    0.0
                } else {
                    t.outliers as f64 / t.answered as f64
                },
                verdict,
            }
        })
        .collect();

    let mut confusion = Confusion::default();
    for u in &users {
        confusion.record(u.expected_malicious, u.verdict == Verdict::Malicious);
    }
    let per_type = BehaviorType::ALL
        .iter()
        .filter_map(|b| summarize(*b, &users))
        .collect();

    Ok(SimulationResult {
        seed: cfg.seed,
        precision: confusion.precision(),
        recall: confusion.recall(),
        false_positive_rate: confusion.false_positive_rate(),
        users,
        per_type,
        confusion,
        windows,
    })
}

#[derive(Debug, Clone, Default)]
struct Tally {
    answered: usize,
    outliers: usize,
    malicious: bool,
    vetted: bool,
}

fn summarize(behavior: BehaviorType, users: &[UserOutcome]) -> Option<TypeSummary> {
    let members: Vec<&UserOutcome> = users.iter().filter(|u| u.behavior == behavior).collect();
    if members.is_empty() {
        return None;
    }
    let n = members.len() as f64;
    let mean = |f: &dyn Fn(&UserOutcome) -> f64| members.iter().map(|u| f(u)).sum::<f64>() / n;
    let malicious = members
        .iter()
        .filter(|u| u.verdict == Verdict::Malicious)
        .count();
    Some(TypeSummary {
        behavior,
        users: members.len(),
        mean_answered: mean(&|u| u.answered as f64),
        mean_valid: mean(&|u| u.valid as f64),
        mean_outliers: mean(&|u| u.outliers as f64),
        mean_ratio: mean(&|u| u.ratio),
        malicious,
        flag_rate: malicious as f64 / n,
    })
}
