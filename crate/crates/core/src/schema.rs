//! Questionnaire instrument: the ordered list of questions a reporter answers.
//!
//! Scored questions are multiple choice and feed the numeric detection
//! pipeline. Descriptive questions take free text and are only forwarded to
//! relief organizations.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_SCHEMA_JSON: &str = include_str!("../data/default_schema.json");

/// Need category a question belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Victim,
    FacilityLivelihood,
    Medical,
    Transfer,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Victim,
        Category::FacilityLivelihood,
        Category::Medical,
        Category::Transfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Victim => "Victim",
            Category::FacilityLivelihood => "FacilityLivelihood",
            Category::Medical => "Medical",
            Category::Transfer => "Transfer",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKind {
    Scored,
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: u32,
    pub category: Category,
    pub kind: QuestionKind,
    pub text: String,
    pub option_count: u32,
    pub option_labels: Vec<String>,
}

impl QuestionSpec {
    pub fn is_scored(&self) -> bool {
        self.kind == QuestionKind::Scored
    }

    fn check(&self) -> Result<(), SchemaError> {
        match self.kind {
            QuestionKind::Scored if self.option_count < 2 => Err(SchemaError::Invalid(format!(
                "scored question {} needs at least 2 options, has {}",
                self.id, self.option_count
            ))),
            QuestionKind::Descriptive if self.option_count != 0 => Err(SchemaError::Invalid(
                format!("descriptive question {} must have option_count 0", self.id),
            )),
            _ if self.option_labels.len() != self.option_count as usize => {
                Err(SchemaError::Invalid(format!(
                    "question {} declares {} options but lists {} labels",
                    self.id,
                    self.option_count,
                    self.option_labels.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("malformed schema document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read schema file: {0}")]
    Io(#[from] std::io::Error),
}

/// A versioned questionnaire. Construct through [`QuestionnaireSchema::new`]
/// or one of the loaders so the invariants are checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionnaireSchema {
    version: String,
    questions: Vec<QuestionSpec>,
}

#[derive(Deserialize)]
struct RawSchema {
    version: String,
    questions: Vec<QuestionSpec>,
}

impl<'de> Deserialize<'de> for QuestionnaireSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSchema::deserialize(deserializer)?;
        QuestionnaireSchema::new(raw.version, raw.questions).map_err(serde::de::Error::custom)
    }
}

impl QuestionnaireSchema {
    pub fn new(
        version: impl Into<String>,
        questions: Vec<QuestionSpec>,
    ) -> Result<Self, SchemaError> {
        if questions.is_empty() {
            return Err(SchemaError::Invalid("schema has no questions".into()));
        }
        for (idx, q) in questions.iter().enumerate() {
            if q.id as usize != idx + 1 {
                return Err(SchemaError::Invalid(format!(
                    "question ids must be 1..Q in order; position {} has id {}",
                    idx + 1,
                    q.id
                )));
            }
            q.check()?;
        }
        Ok(Self {
            version: version.into(),
            questions,
        })
    }

    /// The shipped 17-question flood-response instrument.
    pub fn default_flood() -> Self {
        Self::from_json(DEFAULT_SCHEMA_JSON).expect("bundled schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn questions(&self) -> &[QuestionSpec] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn question(&self, id: u32) -> Option<&QuestionSpec> {
        id.checked_sub(1)
            .and_then(|i| self.questions.get(i as usize))
    }

    pub fn scored(&self) -> impl Iterator<Item = &QuestionSpec> {
        self.questions.iter().filter(|q| q.is_scored())
    }

    pub fn max_option_count(&self) -> u32 {
        self.questions
            .iter()
            .map(|q| q.option_count)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let schema = QuestionnaireSchema::default_flood();
        assert_eq!(schema.len(), 17);
        assert_eq!(schema.scored().count(), 15);
        assert_eq!(
            schema
                .questions()
                .iter()
                .filter(|q| q.kind == QuestionKind::Descriptive)
                .count(),
            2
        );
        for cat in Category::ALL {
            assert!(schema.scored().any(|q| q.category == cat), "{cat} missing");
        }
        let per_cat = |c| schema.scored().filter(|q| q.category == c).count();
        assert_eq!(per_cat(Category::Victim), 4);
        assert_eq!(per_cat(Category::FacilityLivelihood), 4);
        assert_eq!(per_cat(Category::Medical), 3);
        assert_eq!(per_cat(Category::Transfer), 4);
        assert!(schema.scored().filter(|q| q.option_count == 10).count() >= 4);
    }

    #[test]
    fn rejects_gaps_in_ids() {
        let mut qs = QuestionnaireSchema::default_flood().questions().to_vec();
        qs.remove(3);
        assert!(matches!(
            QuestionnaireSchema::new("x", qs),
            Err(SchemaError::Invalid(_))
        ));
    }

    #[test]
    fn rejects_scored_with_one_option() {
        let q = QuestionSpec {
            id: 1,
            category: Category::Medical,
            kind: QuestionKind::Scored,
            text: "?".into(),
            option_count: 1,
            option_labels: vec!["only".into()],
        };
        assert!(QuestionnaireSchema::new("x", vec![q]).is_err());
    }

    #[test]
    fn rejects_label_count_mismatch_via_json() {
        let text = r#"{"version":"v","questions":[{"id":1,"category":"Victim","kind":"Scored",
            "text":"t","option_count":3,"option_labels":["a","b"]}]}"#;
        assert!(QuestionnaireSchema::from_json(text).is_err());
    }

    #[test]
    fn descriptive_must_have_no_options() {
        let text = r#"{"version":"v","questions":[{"id":1,"category":"Victim","kind":"Descriptive",
            "text":"t","option_count":2,"option_labels":["a","b"]}]}"#;
        assert!(QuestionnaireSchema::from_json(text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let schema = QuestionnaireSchema::default_flood();
        let text = serde_json::to_string(&schema).unwrap();
        assert_eq!(QuestionnaireSchema::from_json(&text).unwrap(), schema);
    }
}
