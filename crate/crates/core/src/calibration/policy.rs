use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::{digest_hex, Category, Language, Prediction};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub sample_id: String,
    /// e.g. `"en: min-precision 0.90"`.
    #[serde(default)]
    pub floors: Vec<String>,
    #[serde(default)]
    pub option: String,
}

/// Decision thresholds in force: one relevance threshold per scored
/// language and one threshold per category shared by all languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub relevance: BTreeMap<Language, f64>,
    pub categories: BTreeMap<Category, f64>,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
}

impl PolicyError {
    pub fn field(&self) -> Option<&str> {
        match self {
            PolicyError::Invalid { field, .. } => Some(field),
            PolicyError::Io(_) => None,
        }
    }

    fn invalid(field: String, message: &str) -> Self {
        PolicyError::Invalid { field, message: message.to_owned() }
    }
}

impl ThresholdPolicy {
    pub fn uniform(relevance: f64, category: f64) -> Self {
        ThresholdPolicy {
            relevance: Language::SCORED.iter().map(|&l| (l, relevance)).collect(),
            categories: Category::ALL.iter().map(|&c| (c, category)).collect(),
            provenance: Provenance::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for lang in Language::SCORED {
            match self.relevance.get(&lang) {
                None => return Err(PolicyError::invalid(format!("relevance.{lang}"), "missing threshold")),
                Some(t) if !(0.0..=1.0).contains(t) => {
                    return Err(PolicyError::invalid(format!("relevance.{lang}"), "threshold outside [0, 1]"))
                }
                Some(_) => {}
            }
        }
        if self.relevance.contains_key(&Language::Other) {
            return Err(PolicyError::invalid("relevance.other".into(), "language is not on the scoring path"));
        }
        for cat in Category::ALL {
            match self.categories.get(&cat) {
                None => return Err(PolicyError::invalid(format!("categories.{cat}"), "missing threshold")),
                Some(t) if !(0.0..=1.0).contains(t) => {
                    return Err(PolicyError::invalid(format!("categories.{cat}"), "threshold outside [0, 1]"))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        digest_hex(&serde_json::to_vec(self).expect("policy serializes"))
    }

    pub fn threshold(&self, language: Language) -> Option<f64> {
        self.relevance.get(&language).copied()
    }

    pub fn is_relevant(&self, prediction: &Prediction, language: Language) -> bool {
        self.threshold(language).is_some_and(|t| prediction.relevance_score >= t)
    }

    pub fn predicted_categories(&self, prediction: &Prediction) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| self.categories.get(c).is_some_and(|&t| prediction.category_score(*c) >= t))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))?;
        let policy: ThresholdPolicy =
            serde_json::from_str(&text).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut text = serde_json::to_string_pretty(self).expect("policy serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))
    }
}
