//! Review queue selection and weekly capacity accounting.

use std::collections::HashMap;

use chrono::{DateTime, Datelike, Utc};
use serde::Serialize;
use triage_core::calibration::ThresholdPolicy;
use triage_core::store::StoreData;
use triage_core::types::{Article, Language, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueItem {
    pub article: Article,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewQueue {
    /// ISO week the capacity applies to, e.g. `2024-W10`.
    pub week: String,
    pub capacity: u64,
    pub reviewed_this_week: u64,
    pub remaining: u64,
    /// Predicted-relevant articles still waiting, before truncation.
    pub pending: usize,
    pub items: Vec<QueueItem>,
}

pub fn iso_week(t: DateTime<Utc>) -> String {
    let w = t.iso_week();
    format!("{}-W{:02}", w.year(), w.week())
}

/// Articles whose first review falls in the ISO week of `now`.
pub fn reviewed_in_week(store: &StoreData, now: DateTime<Utc>) -> u64 {
    let week = now.iso_week();
    let mut first: HashMap<&str, DateTime<Utc>> = HashMap::new();
    for d in store.decisions() {
        first
            .entry(d.article_id.as_str())
            .and_modify(|t| *t = (*t).min(d.decided_at))
            .or_insert(d.decided_at);
    }
    first.values().filter(|t| t.iso_week() == week).count() as u64
}

/// Unreviewed articles predicted relevant by `artifact_id` under `policy`,
/// highest score first, then oldest fetch. The list is cut to the smaller
/// of `limit` and what is left of this week's capacity; the rest rolls
/// over.
pub fn review_queue(
    store: &StoreData,
    policy: &ThresholdPolicy,
    artifact_id: Option<&str>,
    language: Option<Language>,
    limit: usize,
    capacity: u64,
    now: DateTime<Utc>,
) -> ReviewQueue {
    let reviewed = reviewed_in_week(store, now);
    let remaining = capacity.saturating_sub(reviewed);
    let mut items: Vec<QueueItem> = match artifact_id {
        None => Vec::new(),
        Some(artifact) => store
            .predictions()
            .iter()
            .filter(|p| p.artifact_id == artifact && !store.has_decision(&p.article_id))
            .filter_map(|p| {
                let a = store.article(&p.article_id)?;
                if language.is_some_and(|l| l != a.language) || !policy.is_relevant(p, a.language) {
                    return None;
                }
                Some(QueueItem { article: a.clone(), prediction: p.clone() })
            })
            .collect(),
    };
    items.sort_by(|x, y| {
        y.prediction
            .relevance_score
            .total_cmp(&x.prediction.relevance_score)
            .then(x.article.fetched_at.cmp(&y.article.fetched_at))
            .then_with(|| x.article.id.cmp(&y.article.id))
    });
    let pending = items.len();
    items.truncate(limit.min(remaining as usize));
    ReviewQueue { week: iso_week(now), capacity, reviewed_this_week: reviewed, remaining, pending, items }
}
