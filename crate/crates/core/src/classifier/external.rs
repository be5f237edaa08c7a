//! Adapter for a remote scorer service speaking the JSON scoring contract.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::model::{ScoreError, Scorer};
use crate::types::{Article, Category, Language, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub title: String,
    pub body: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub artifact_id: String,
    pub relevance: f64,
    pub categories: BTreeMap<String, f64>,
}

impl ScoreResponse {
    pub fn from_scores(artifact_id: impl Into<String>, relevance: f64, categories: [f64; 5]) -> Self {
        ScoreResponse {
            artifact_id: artifact_id.into(),
            relevance,
            categories: Category::ALL.iter().map(|c| (c.as_str().to_owned(), categories[c.index()])).collect(),
        }
    }

    /// Check ranges and completeness, returning (relevance, categories).
    pub fn validate(&self) -> Result<(f64, [f64; 5]), ScoreError> {
        let in_range = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if self.artifact_id.trim().is_empty() {
            return Err(ScoreError::Malformed("empty artifact_id".into()));
        }
        if !in_range(self.relevance) {
            return Err(ScoreError::Malformed(format!("relevance {} outside [0,1]", self.relevance)));
        }
        let mut cats = [0.0; 5];
        for c in Category::ALL {
            let v = *self
                .categories
                .get(c.as_str())
                .ok_or_else(|| ScoreError::Malformed(format!("missing category {c}")))?;
            if !in_range(v) {
                return Err(ScoreError::Malformed(format!("{c} score {v} outside [0,1]")));
            }
            cats[c.index()] = v;
        }
        Ok((self.relevance, cats))
    }
}

pub struct ExternalScorer {
    endpoint: String,
    agent: ureq::Agent,
    last_artifact: Mutex<Option<String>>,
}

impl ExternalScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ExternalScorer { endpoint: endpoint.into(), agent, last_artifact: Mutex::new(None) }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn classify(err: ureq::Error) -> ScoreError {
    match err {
        ureq::Error::Timeout(t) => ScoreError::Timeout(t.to_string()),
        ureq::Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
            ScoreError::Timeout(e.to_string())
        }
        ureq::Error::Json(e) => ScoreError::Malformed(e.to_string()),
        other => ScoreError::Transport(other.to_string()),
    }
}

impl Scorer for ExternalScorer {
    fn artifact_id(&self) -> Option<String> {
        self.last_artifact.lock().expect("artifact lock").clone()
    }

    fn score(&self, article: &Article) -> Result<Prediction, ScoreError> {
        if !article.language.is_scored() {
            return Err(ScoreError::UnsupportedLanguage(article.language));
        }
        let request = ScoreRequest {
            title: article.title.clone(),
            body: article.body.clone(),
            language: article.language,
        };
        let mut resp = self.agent.post(&self.endpoint).send_json(&request).map_err(classify)?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(ScoreError::Transport(format!("status {status}")));
        }
        if status != 200 {
            return Err(ScoreError::Malformed(format!("status {status}")));
        }
        let body: ScoreResponse = resp.body_mut().read_json().map_err(classify)?;
        let (relevance_score, category_scores) = body.validate()?;
        *self.last_artifact.lock().expect("artifact lock") = Some(body.artifact_id.clone());
        Ok(Prediction {
            article_id: article.id.clone(),
            artifact_id: body.artifact_id,
            relevance_score,
            category_scores,
            scored_at: Utc::now(),
        })
    }
}
