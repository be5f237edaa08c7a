//! Train a scorer from reviewed articles and evaluate it on the most recent
//! slice of labels.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::features::Featurizer;
use super::model::{LinearScorer, HEAD_COUNT};
use super::train::{temporal_split, train, LabeledExample, SplitError, TrainConfig, TrainError};
use crate::store::StoreData;
use crate::types::{Category, Language};

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("split: {0}")]
    Split(#[from] SplitError),
    #[error("train: {0}")]
    Train(#[from] TrainError),
}

/// One example per reviewed article on the scoring path, labeled by its
/// consensus decision.
pub fn examples_from_store(store: &StoreData, featurizer: &Featurizer, masked: &[Category]) -> Vec<LabeledExample> {
    store
        .consensus_decisions()
        .iter()
        .filter_map(|d| {
            let a = store.article(&d.article_id)?;
            a.language
                .is_scored()
                .then(|| LabeledExample::from_decision(featurizer, &a.title, &a.body, a.language, d, masked))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub artifact_id: String,
    pub config: TrainConfig,
    pub train_fraction: f64,
    pub train_examples: usize,
    pub holdout_examples: usize,
    /// Earliest decision time in the holdout.
    pub holdout_from: DateTime<Utc>,
    pub masked: Vec<Category>,
    pub untrained: Vec<Category>,
    pub final_loss: [f64; HEAD_COUNT],
    /// Relevance at 0.5 on the holdout.
    pub holdout: BTreeMap<Language, Confusion>,
}

impl TrainSummary {
    pub fn render(&self) -> String {
        let metric = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"));
        let list = |cs: &[Category]| {
            if cs.is_empty() {
                "none".to_owned()
            } else {
                cs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            }
        };
        let mut out = format!(
            "artifact {}\ntrain {} holdout {} (holdout from {})\nmasked {} untrained {}\nrelevance loss {:.4}\n",
            self.artifact_id,
            self.train_examples,
            self.holdout_examples,
            self.holdout_from.format("%Y-%m-%d"),
            list(&self.masked),
            list(&self.untrained),
            self.final_loss[0],
        );
        let mut rows = vec![[
            "language".to_owned(),
            "n".into(),
            "tp".into(),
            "fp".into(),
            "fn".into(),
            "precision".into(),
            "recall".into(),
        ]];
        for (lang, c) in &self.holdout {
            rows.push([
                lang.to_string(),
                (c.tp + c.fp + c.fn_ + c.tn).to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                metric(c.precision()),
                metric(c.recall()),
            ]);
        }
        out.push_str(&crate::calibration::aligned_table(&rows));
        out
    }
}

/// Split by decision time, train on the earlier part and score the rest.
pub fn train_and_evaluate(
    examples: Vec<LabeledExample>,
    config: &TrainConfig,
    train_fraction: f64,
    masked: &[Category],
) -> Result<(LinearScorer, TrainSummary), WorkflowError> {
    let (train_set, holdout) = temporal_split(examples, train_fraction)?;
    let (scorer, report) = train(&train_set, config)?;
    let mut by_lang: BTreeMap<Language, Confusion> = BTreeMap::new();
    for ex in &holdout {
        let (relevance, _) = scorer.score_features(&ex.features);
        by_lang.entry(ex.language).or_default().add(relevance >= 0.5, ex.relevant);
    }
    let summary = TrainSummary {
        artifact_id: scorer.id().to_owned(),
        config: config.clone(),
        train_fraction,
        train_examples: train_set.len(),
        holdout_examples: holdout.len(),
        holdout_from: holdout[0].timestamp,
        masked: masked.to_vec(),
        untrained: report.untrained,
        final_loss: report.final_loss,
        holdout: by_lang,
    };
    Ok((scorer, summary))
}
