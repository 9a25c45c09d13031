use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::behavior::BehaviorType;
use super::scenario::{middle_truth, run_scenario, Confusion, ScenarioConfig};
use super::SimError;
use crate::schema::{Category, QuestionKind, QuestionSpec, QuestionnaireSchema};
use crate::trust::Verdict;

/// Users per behaviour type in the default five-type experiment.
pub const TABLE1_COHORT: u32 = 10;

/// The five-type experiment: `cohort_size` users of every type, default
/// questionnaire, middle-option truth, one region, one period.
pub fn table1_scenario(cohort_size: u32, seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(
        seed,
        BehaviorType::ALL
            .iter()
            .map(|b| (*b, cohort_size))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub user: String,
    pub behavior: BehaviorType,
    pub mean_valid: f64,
    pub total_questions: usize,
    /// Most common verdict in the cohort. Ties resolve in the order
    /// Malicious, NonMalicious, Unvetted.
    pub verdict: Verdict,
    pub malicious_share: f64,
}

/// One summary row per behaviour type, in type order.
pub fn table1_experiment(cohort_size: u32, seed: u64) -> Result<Vec<Table1Row>, SimError> {
    let cfg = table1_scenario(cohort_size, seed);
    let total_questions = cfg.schema.scored().count();
    let result = run_scenario(&cfg)?;
    Ok(BehaviorType::ALL
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let members: Vec<_> = result.users.iter().filter(|u| u.behavior == *b).collect();
            let n = members.len().max(1) as f64;
            let count = |v: Verdict| members.iter().filter(|u| u.verdict == v).count();
            let verdict = [Verdict::Malicious, Verdict::NonMalicious, Verdict::Unvetted]
                .into_iter()
                .rev()
                .max_by_key(|v| count(*v))
                .expect("non-empty");
            Table1Row {
                user: format!("User{}", i + 1),
                behavior: *b,
                mean_valid: members.iter().map(|u| u.valid as f64).sum::<f64>() / n,
                total_questions,
                verdict,
                malicious_share: count(Verdict::Malicious) as f64 / n,
            }
        })
        .collect())
}

/// One row per behaviour with mean valid answers and the modal verdict.
pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "User",
        "User type",
        "Number of valid answers",
        "Total number of questions",
        "participation type",
    ])
    .expect("in-memory write");
    for r in rows {
        let verdict = match r.verdict {
            Verdict::Malicious => "Malicious User",
            Verdict::NonMalicious => "non-Malicious User",
            Verdict::Unvetted => "Unvetted",
        };
        w.write_record([
            r.user.clone(),
            r.behavior.description().to_owned(),
            format!("{:.2}", r.mean_valid),
            r.total_questions.to_string(),
            verdict.to_owned(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Parameter grid for [`sweep`]. Every combination of fraction, option count
/// and cohort size is one cell; each cell is run once per seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub honest_fractions: Vec<f64>,
    pub option_counts: Vec<u32>,
    pub cohort_sizes: Vec<u32>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub honest_fraction: f64,
    pub option_count: u32,
    pub cohort_size: u32,
    pub runs: usize,
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

/// Fifteen scored questions sharing one option count.
pub fn uniform_schema(option_count: u32) -> Result<QuestionnaireSchema, SimError> {
    let questions = (1..=15)
        .map(|id| QuestionSpec {
            id,
            category: Category::ALL[(id as usize - 1) % 4],
            kind: QuestionKind::Scored,
            text: format!("q{id}"),
            option_count,
            option_labels: (1..=option_count).map(|k| k.to_string()).collect(),
        })
        .collect();
    QuestionnaireSchema::new(format!("uniform-{option_count}"), questions)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))
}

/// Splits a cohort: honest users alternate Accurate/NormalLow, the rest
/// cycle Random/Pattern/NormalHigh.
pub fn mixed_population(cohort_size: u32, honest_fraction: f64) -> BTreeMap<BehaviorType, u32> {
    let honest = (f64::from(cohort_size) * honest_fraction.clamp(0.0, 1.0)).round() as u32;
    let mut counts = BTreeMap::new();
    let honest_types = [BehaviorType::Accurate, BehaviorType::NormalLow];
    let adversarial = [
        BehaviorType::Random,
        BehaviorType::Pattern,
        BehaviorType::NormalHigh,
    ];
    for i in 0..honest {
        *counts.entry(honest_types[i as usize % 2]).or_insert(0) += 1;
    }
    for i in 0..cohort_size - honest {
        *counts.entry(adversarial[i as usize % 3]).or_insert(0) += 1;
    }
    counts
}

/// Detection quality over a parameter grid. Confusion counts are pooled
/// across seeds before computing the rates.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::new();
    for &honest_fraction in &grid.honest_fractions {
        for &option_count in &grid.option_counts {
            let schema = uniform_schema(option_count)?;
            for &cohort_size in &grid.cohort_sizes {
                let mut confusion = Confusion::default();
                for &seed in &grid.seeds {
                    let cfg = ScenarioConfig {
                        seed,
                        truth: middle_truth(&schema),
                        schema: schema.clone(),
                        counts: mixed_population(cohort_size, honest_fraction),
                        regions: vec![0],
                        periods: 1,
                        submissions_per_user_per_period: 1,
                        detection: Default::default(),
                    };
                    confusion.merge(&run_scenario(&cfg)?.confusion);
                }
                rows.push(SweepRow {
                    honest_fraction,
                    option_count,
                    cohort_size,
                    runs: grid.seeds.len(),
                    confusion,
                    precision: confusion.precision(),
                    recall: confusion.recall(),
                    false_positive_rate: confusion.false_positive_rate(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "honest_fraction",
        "option_count",
        "cohort_size",
        "runs",
        "precision",
        "recall",
        "false_positive_rate",
    ])
    .expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.honest_fraction.to_string(),
            r.option_count.to_string(),
            r.cohort_size.to_string(),
            r.runs.to_string(),
            opt(r.precision),
            opt(r.recall),
            opt(r.false_positive_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
