//! Relevance and category scoring.
//!
//! The built-in scorer is a linear model over hashed word n-grams. Remote
//! scorers plug in through [`Scorer`] via [`ExternalScorer`], and recorded
//! predictions can be replayed through [`RecordedScorer`].

mod external;
mod features;
mod model;
mod train;
mod workflow;

use std::collections::{HashMap, HashSet};

use serde::Serialize;

pub use external::{ExternalScorer, ScoreRequest, ScoreResponse};
pub use features::{tokens, FeatureVector, Featurizer, DEFAULT_HASH_BITS};
pub use model::{sigmoid, ArtifactFormatError, Head, LinearScorer, ScoreError, Scorer, FORMAT_VERSION, HEAD_COUNT};
pub use workflow::{examples_from_store, train_and_evaluate, Confusion, TrainSummary, WorkflowError};
pub use train::{
    loss_and_gradient, temporal_split, train, train_with, Augmenter, CategoryLabel, LabeledExample, NoAugmentation,
    SplitError, Timestamped, TrainConfig, TrainError, TrainReport,
};

use crate::store::{Store, StoreError};
use crate::types::{Article, Prediction};

impl LinearScorer {
    pub fn from_heads(bits: u32, seed: u64, heads: Vec<Head>) -> Self {
        assert_eq!(heads.len(), HEAD_COUNT);
        LinearScorer::from_parts(Featurizer::new(bits), seed, heads)
    }
}

/// Replays predictions captured earlier, e.g. from a baseline system.
pub struct RecordedScorer {
    artifact_id: String,
    by_article: HashMap<String, Prediction>,
}

impl RecordedScorer {
    pub fn new(artifact_id: impl Into<String>, predictions: impl IntoIterator<Item = Prediction>) -> Self {
        RecordedScorer {
            artifact_id: artifact_id.into(),
            by_article: predictions.into_iter().map(|p| (p.article_id.clone(), p)).collect(),
        }
    }
}

impl Scorer for RecordedScorer {
    fn artifact_id(&self) -> Option<String> {
        Some(self.artifact_id.clone())
    }

    fn score(&self, article: &Article) -> Result<Prediction, ScoreError> {
        if !article.language.is_scored() {
            return Err(ScoreError::UnsupportedLanguage(article.language));
        }
        self.by_article
            .get(&article.id)
            .cloned()
            .ok_or_else(|| ScoreError::Missing(article.id.clone()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScoringReport {
    pub scored: usize,
    /// Retryable failures; the articles stay unscored.
    pub deferred: usize,
    pub failed: usize,
}

/// Score every article on the scoring path that lacks a prediction from
/// `scorer`, storing the results.
pub fn score_pending(store: &mut Store, scorer: &dyn Scorer) -> Result<ScoringReport, StoreError> {
    let pending: Vec<Article> = match scorer.artifact_id() {
        Some(id) => store.unscored(&id).into_iter().cloned().collect(),
        None => {
            let scored: HashSet<&str> = store.predictions().iter().map(|p| p.article_id.as_str()).collect();
            store
                .articles()
                .iter()
                .filter(|a| a.language.is_scored() && !scored.contains(a.id.as_str()))
                .cloned()
                .collect()
        }
    };
    let mut report = ScoringReport::default();
    for article in &pending {
        match scorer.score(article) {
            Ok(p) => {
                store.put_prediction(p)?;
                report.scored += 1;
            }
            Err(e) if e.is_retryable() => {
                tracing::warn!(article = %article.id, error = %e, "scoring deferred");
                report.deferred += 1;
            }
            Err(e) => {
                tracing::warn!(article = %article.id, error = %e, "scoring failed");
                report.failed += 1;
            }
        }
    }
    Ok(report)
}
