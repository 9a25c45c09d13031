//! Seeded simulation of reporter populations with known behaviour, used to
//! measure how well detection separates honest from adversarial users.

mod behavior;
mod experiments;
mod scenario;

pub use behavior::{answer, snap_to_option, BehaviorType};
pub use experiments::{
    mixed_population, sweep, sweep_csv, table1_csv, table1_experiment, table1_scenario,
    uniform_schema, SweepGrid, SweepRow, Table1Row, TABLE1_COHORT,
};
pub use scenario::{
    generate_reports, middle_truth, run_scenario, user_rng, Confusion, ScenarioConfig,
    ScenarioFile, SimUser, SimulationResult, TypeSummary, UserOutcome,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot read {0}: {1}")]
    Io(String, String),
}
