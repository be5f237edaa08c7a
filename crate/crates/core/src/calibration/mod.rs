//! Threshold calibration on a labeled staging sample.
//!
//! A staging run scores a window of live traffic; a subset is labeled by
//! reviewers. From that we build operating tables (precision, recall and
//! projected weekly review volume per candidate threshold), pick per-language
//! relevance thresholds and pooled per-category thresholds, and write the
//! result as a [`ThresholdPolicy`].

mod categories;
mod policy;
mod report;
mod sample;
mod table;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use chrono::{DateTime, Utc};

use crate::store::StoreData;
use crate::types::{Category, Language, Source};

pub use categories::{calibrate_categories, CategoryCalibration, CategoryOutcome, DEFAULT_CATEGORY_FLOOR};
pub use policy::{PolicyError, Provenance, ThresholdPolicy};
pub(crate) use report::aligned as aligned_table;
pub use report::{render_operating_table, render_selection, OperatingRecord, ReportRow};
pub use sample::{allocate, bin_of, stratified_sample, stratified_sample_with, Allocation, StratifiedSample, Stratum};
pub use table::{
    candidate_thresholds, meets_floor, operating_table, relevance_table, select_threshold, Estimator, OperatingPoint,
    OperatingTable, ScoredItem, SelectionError, SelectionMode,
};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("need at least 2 bins, got {0}")]
    Bins(usize),
    #[error("target sample size must be positive")]
    TargetSize,
    #[error("no predictions to sample from")]
    EmptyPredictions,
    #[error("window must span at least one day")]
    Window,
    #[error("candidate thresholds must be ascending and within [0, 1]")]
    Thresholds,
    #[error("sampled article {0} has no consensus label")]
    MissingLabel(String),
    #[error("sampled article {0} has no score")]
    MissingScore(String),
}

/// Reviewer verdict attached to a staging record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLabel {
    pub relevant: bool,
    #[serde(default)]
    pub categories: BTreeSet<Category>,
}

fn unit_weight() -> f64 {
    1.0
}

fn is_unit(w: &f64) -> bool {
    *w == 1.0
}

/// One scored article from the staging window. Unlabeled records only
/// contribute to volume projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagingRecord {
    pub article_id: String,
    pub language: Language,
    pub source: Source,
    pub relevance: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<Category, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SampleLabel>,
    /// Inverse inclusion probability used by [`Estimator::Weighted`].
    #[serde(default = "unit_weight", skip_serializing_if = "is_unit")]
    pub weight: f64,
}

impl StagingRecord {
    pub fn category_score(&self, category: Category) -> f64 {
        self.categories.get(&category).copied().unwrap_or(0.0)
    }
}

/// Weighted precision and recall; `None` marks an undefined ratio
/// (no predicted positives, or no actual positives).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrEstimate {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl PrEstimate {
    pub fn precision_label(&self) -> String {
        self.precision.map_or_else(|| "no-positives".to_owned(), |p| format!("{p:.3}"))
    }
}

/// Estimate precision and recall at `threshold` from a stratified sample.
/// Every sampled item counts with weight `N_h / n_h`.
pub fn estimate_pr(
    sample: &StratifiedSample,
    labels: &HashMap<String, bool>,
    scores: &HashMap<String, f64>,
    threshold: f64,
) -> Result<PrEstimate, CalibrationError> {
    let (mut tp, mut pp, mut pos) = (0.0, 0.0, 0.0);
    for stratum in &sample.strata {
        let Some(w) = stratum.weight() else { continue };
        for id in &stratum.sampled {
            let relevant = *labels.get(id).ok_or_else(|| CalibrationError::MissingLabel(id.clone()))?;
            let score = *scores.get(id).ok_or_else(|| CalibrationError::MissingScore(id.clone()))?;
            let predicted = score >= threshold;
            if predicted {
                pp += w;
            }
            if relevant {
                pos += w;
                if predicted {
                    tp += w;
                }
            }
        }
    }
    Ok(PrEstimate {
        precision: (pp > 0.0).then(|| tp / pp),
        recall: (pos > 0.0).then(|| tp / pos),
    })
}

/// Staging records from the store: every prediction under `artifact_id` for
/// articles fetched in `[from, to)`, labeled with the consensus decision
/// where one exists.
pub fn staging_records(
    store: &StoreData,
    artifact_id: &str,
    language: Option<Language>,
    from: DateTime<Utc>,
    to: DateTime<Utc>,
) -> Vec<StagingRecord> {
    store
        .predictions()
        .iter()
        .filter(|p| p.artifact_id == artifact_id)
        .filter_map(|p| {
            let a = store.article(&p.article_id)?;
            if language.is_some_and(|l| l != a.language) || a.fetched_at < from || a.fetched_at >= to {
                return None;
            }
            let label = store
                .latest_decision(&a.id)
                .ok()
                .flatten()
                .map(|d| SampleLabel { relevant: d.relevant, categories: d.categories });
            Some(StagingRecord {
                article_id: a.id.clone(),
                language: a.language,
                source: a.source,
                relevance: p.relevance_score,
                categories: Category::ALL.iter().map(|c| (*c, p.category_score(*c))).collect(),
                label,
                weight: 1.0,
            })
        })
        .collect()
}

/// Relevance calibration for one language: an optional table of candidate
/// options and the threshold the selection rule picks.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceCalibration {
    pub language: Language,
    pub mode: SelectionMode,
    pub labeled: usize,
    pub options: Vec<ReportRow>,
    pub baseline_weekly: Option<u64>,
    pub selection: Result<OperatingPoint, SelectionError>,
}

impl RelevanceCalibration {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.options.is_empty() {
            out.push_str(&render_operating_table(&self.options, self.baseline_weekly));
            out.push('\n');
        }
        match &self.selection {
            Ok(point) => out.push_str(&render_selection(self.language.as_str(), self.mode, point)),
            Err(e) => {
                out.push_str(&format!("{} {}\ninfeasible: {e}\n", self.language, self.mode));
            }
        }
        out
    }

    pub fn records(&self) -> Vec<OperatingRecord> {
        self.options.iter().map(|r| OperatingRecord::new(r, self.baseline_weekly)).collect()
    }

    /// Write the selected threshold into `policy`. Returns false when the
    /// selection failed and the policy was left alone.
    pub fn apply_to(&self, policy: &mut ThresholdPolicy) -> bool {
        match &self.selection {
            Ok(point) => {
                policy.relevance.insert(self.language, point.threshold);
                policy.provenance.floors.retain(|f| !f.starts_with(&format!("{}:", self.language)));
                policy.provenance.floors.push(format!("{}: {}", self.language, self.mode));
                true
            }
            Err(_) => false,
        }
    }
}

/// Build the operating table for `language` over `records`, tabulate
/// `options` (sorted ascending) and select a threshold with `mode`.
pub fn calibrate_relevance(
    records: &[StagingRecord],
    language: Language,
    mode: SelectionMode,
    window_days: u32,
    estimator: Estimator,
    options: &[f64],
    baseline_weekly: Option<u64>,
) -> Result<RelevanceCalibration, CalibrationError> {
    let labeled = records.iter().filter(|r| r.language == language && r.label.is_some()).count();
    let table = relevance_table(records, Some(language), None, window_days, estimator)?;
    let selection = select_threshold(&table.points, mode);
    let mut options = options.to_vec();
    options.sort_by(f64::total_cmp);
    options.dedup();
    let rows = if options.is_empty() {
        Vec::new()
    } else {
        relevance_table(records, Some(language), Some(&options), window_days, estimator)?
            .points
            .into_iter()
            .enumerate()
            .map(|(i, point)| ReportRow { label: (i + 1).to_string(), point })
            .collect()
    };
    Ok(RelevanceCalibration { language, mode, labeled, options: rows, baseline_weekly, selection })
}
