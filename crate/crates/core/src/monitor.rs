//! Live precision monitoring: monthly buckets per language, drift alerts,
//! retraining recommendations and the missing-label audit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdPolicy;
use crate::classifier::TrainConfig;
use crate::store::StoreData;
use crate::types::{Category, Language, Prediction, ReviewDecision};

/// Prefix of every alert log line.
pub const ALERT_PREFIX: &str = "DRIFT-ALERT";
pub const STATUS_PREFIX: &str = "DRIFT-STATUS";

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error("audit threshold {0} outside [0, 1]")]
    AuditThreshold(f64),
    #[error("export failed: {0}")]
    Export(#[from] csv::Error),
    #[error("export failed: {0}")]
    Io(#[from] io::Error),
}

/// Calendar month, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(t: DateTime<Utc>) -> Self {
        Month { year: t.year(), month: t.month() }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl TryFrom<String> for Month {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("bad month `{s}`"))?;
        let year = y.parse().map_err(|_| format!("bad month `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month `{s}`"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("bad month `{s}`"));
        }
        Ok(Month { year, month })
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

/// A reviewed, scored article.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewedItem {
    pub article_id: String,
    pub language: Language,
    pub decided_at: DateTime<Utc>,
    pub relevance_score: f64,
    pub relevant: bool,
}

/// Join consensus decisions with predictions from `artifact_id`.
pub fn reviewed_items(store: &StoreData, artifact_id: &str) -> Vec<ReviewedItem> {
    store
        .consensus_decisions()
        .into_iter()
        .filter_map(|d| {
            let article = store.article(&d.article_id)?;
            let p = store.prediction(&d.article_id, artifact_id)?;
            Some(ReviewedItem {
                article_id: d.article_id,
                language: article.language,
                decided_at: d.decided_at,
                relevance_score: p.relevance_score,
                relevant: d.relevant,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBucket {
    pub period: Month,
    pub language: Language,
    pub reviewed: u64,
    pub confirmed: u64,
    /// confirmed / reviewed.
    pub precision: Option<f64>,
}

/// Live precision per (month, language) over reviewed articles the policy
/// predicts relevant. Months without reviews produce no bucket.
pub fn bucket_metrics(items: &[ReviewedItem], policy: &ThresholdPolicy) -> Vec<MetricsBucket> {
    let mut counts: BTreeMap<(Month, Language), (u64, u64)> = BTreeMap::new();
    for item in items {
        let Some(t) = policy.threshold(item.language) else { continue };
        if item.relevance_score < t {
            continue;
        }
        let c = counts.entry((Month::of(item.decided_at), item.language)).or_default();
        c.0 += 1;
        c.1 += u64::from(item.relevant);
    }
    counts
        .into_iter()
        .map(|((period, language), (reviewed, confirmed))| MetricsBucket {
            period,
            language,
            reviewed,
            confirmed,
            precision: (reviewed > 0).then(|| confirmed as f64 / reviewed as f64),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRule {
    pub delta: f64,
    /// Prior qualifying buckets needed to form a reference.
    pub min_history: usize,
    pub min_support: u64,
}

impl Default for DriftRule {
    fn default() -> Self {
        DriftRule { delta: 0.05, min_history: 2, min_support: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftAlert {
    pub language: Language,
    pub period: Month,
    pub observed: f64,
    pub reference: f64,
    pub delta: f64,
    pub rule: String,
}

impl DriftAlert {
    pub fn log_line(&self) -> String {
        format!(
            "{ALERT_PREFIX} language={} period={} observed={:.3} reference={:.3} delta={:.2} rule=\"{}\"",
            self.language, self.period, self.observed, self.reference, self.delta, self.rule
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DriftStatus {
    Evaluated { period: Month, observed: f64, reference: f64, alert: bool },
    /// Too few buckets, or too few qualifying ones, to form a reference.
    InsufficientHistory { buckets: usize },
    /// The latest bucket has fewer reviews than the support floor.
    InsufficientSupport { period: Month, reviewed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub rule: DriftRule,
    pub languages: BTreeMap<Language, DriftStatus>,
    pub alerts: Vec<DriftAlert>,
}

impl DriftReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (lang, status) in &self.languages {
            let line = match status {
                DriftStatus::Evaluated { period, observed, reference, alert } => format!(
                    "{STATUS_PREFIX} language={lang} period={period} observed={observed:.3} reference={reference:.3} alert={alert}"
                ),
                DriftStatus::InsufficientHistory { buckets } => {
                    format!("{STATUS_PREFIX} language={lang} insufficient-history buckets={buckets}")
                }
                DriftStatus::InsufficientSupport { period, reviewed } => {
                    format!("{STATUS_PREFIX} language={lang} period={period} insufficient-support reviewed={reviewed}")
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        for a in &self.alerts {
            out.push_str(&a.log_line());
            out.push('\n');
        }
        out
    }
}

/// Evaluate the latest bucket of each language against the mean of its
/// earlier buckets that meet the support floor.
pub fn detect_drift(buckets: &[MetricsBucket], rule: DriftRule) -> DriftReport {
    let mut by_lang: BTreeMap<Language, Vec<&MetricsBucket>> = BTreeMap::new();
    for b in buckets {
        by_lang.entry(b.language).or_default().push(b);
    }
    let mut report = DriftReport { rule, languages: BTreeMap::new(), alerts: Vec::new() };
    for (lang, mut series) in by_lang {
        series.sort_by_key(|b| b.period);
        let status = evaluate(&series, rule);
        if let DriftStatus::Evaluated { period, observed, reference, alert: true } = status {
            report.alerts.push(DriftAlert {
                language: lang,
                period,
                observed,
                reference,
                delta: rule.delta,
                rule: format!("latest < mean(prior) - {}", rule.delta),
            });
        }
        report.languages.insert(lang, status);
    }
    report
}

fn evaluate(series: &[&MetricsBucket], rule: DriftRule) -> DriftStatus {
    let history = rule.min_history.max(1);
    if series.len() < history + 1 {
        return DriftStatus::InsufficientHistory { buckets: series.len() };
    }
    let (latest, prior) = series.split_last().expect("non-empty");
    let qualifying: Vec<f64> = prior
        .iter()
        .filter(|b| b.reviewed >= rule.min_support)
        .filter_map(|b| b.precision)
        .collect();
    if qualifying.len() < history {
        return DriftStatus::InsufficientHistory { buckets: series.len() };
    }
    let Some(observed) = latest.precision.filter(|_| latest.reviewed >= rule.min_support) else {
        return DriftStatus::InsufficientSupport { period: latest.period, reviewed: latest.reviewed };
    };
    let reference = qualifying.iter().sum::<f64>() / qualifying.len() as f64;
    DriftStatus::Evaluated {
        period: latest.period,
        observed,
        reference,
        alert: observed < reference - rule.delta - 1e-9,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub article_id: String,
    pub score: f64,
}

/// Reviewed articles scoring at least `audit_threshold` on `category` whose
/// consensus decision lacks it, highest score first.
pub fn audit_missing_labels(
    predictions: &[Prediction],
    decisions: &HashMap<String, ReviewDecision>,
    category: Category,
    audit_threshold: f64,
) -> Result<Vec<AuditEntry>, MonitorError> {
    if !(0.0..=1.0).contains(&audit_threshold) {
        return Err(MonitorError::AuditThreshold(audit_threshold));
    }
    let mut seen = BTreeSet::new();
    let mut out: Vec<AuditEntry> = predictions
        .iter()
        .filter(|p| p.category_score(category) >= audit_threshold)
        .filter(|p| decisions.get(&p.article_id).is_some_and(|d| !d.categories.contains(&category)))
        .filter(|p| seen.insert(p.article_id.clone()))
        .map(|p| AuditEntry { article_id: p.article_id.clone(), score: p.category_score(category) })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.article_id.cmp(&b.article_id)));
    Ok(out)
}

/// Audit list as text: one `article_id score` line per entry.
pub fn render_audit(entries: &[AuditEntry], category: Category, audit_threshold: f64) -> String {
    let mut out = format!("{category} at or above {audit_threshold:.2} without the label: {}\n", entries.len());
    for e in entries {
        out.push_str(&format!("{} {:.3}\n", e.article_id, e.score));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainPolicy {
    pub min_fresh_labels: usize,
    /// Share of the oldest examples used for training by the temporal split.
    pub train_fraction: f64,
    pub train: TrainConfig,
}

impl Default for RetrainPolicy {
    fn default() -> Self {
        RetrainPolicy { min_fresh_labels: 200, train_fraction: 0.8, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainRecommendation {
    pub trigger: bool,
    pub reason: String,
    pub alerts: usize,
    pub alert_languages: Vec<Language>,
    pub fresh_labels: usize,
    pub train_fraction: f64,
    pub train: TrainConfig,
}

impl RetrainRecommendation {
    pub fn render(&self) -> String {
        let verdict = if self.trigger { "yes" } else { "no" };
        format!("retrain {verdict}: {} (fresh labels {}, alerts {})\n", self.reason, self.fresh_labels, self.alerts)
    }
}

/// Recommend retraining when drift was detected and enough new labels
/// exist to retrain on.
pub fn retraining_trigger(alerts: &[DriftAlert], fresh_labels: usize, policy: &RetrainPolicy) -> RetrainRecommendation {
    let languages: BTreeSet<Language> = alerts.iter().map(|a| a.language).collect();
    let (trigger, reason) = if alerts.is_empty() {
        (false, "no drift alerts".to_owned())
    } else if fresh_labels < policy.min_fresh_labels {
        (
            false,
            format!("insufficient new labels ({fresh_labels} < {})", policy.min_fresh_labels),
        )
    } else {
        (true, format!("drift in {} language(s) with {fresh_labels} new labels", languages.len()))
    };
    RetrainRecommendation {
        trigger,
        reason,
        alerts: alerts.len(),
        alert_languages: languages.into_iter().collect(),
        fresh_labels,
        train_fraction: policy.train_fraction,
        train: policy.train.clone(),
    }
}

/// Consensus labels decided after `since`.
pub fn fresh_label_count(store: &StoreData, since: Option<DateTime<Utc>>) -> usize {
    store
        .consensus_decisions()
        .iter()
        .filter(|d| since.is_none_or(|s| d.decided_at > s))
        .count()
}

/// One CSV record per bucket.
pub fn write_metrics_csv<W: io::Write>(buckets: &[MetricsBucket], out: W) -> Result<(), MonitorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "language", "reviewed", "confirmed", "precision"])?;
    for b in buckets {
        w.write_record([
            b.period.to_string(),
            b.language.to_string(),
            b.reviewed.to_string(),
            b.confirmed.to_string(),
            b.precision.map_or_else(String::new, |p| format!("{p:.4}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wide series for charting: one row per month, one precision column per
/// language. Months without a bucket for a language are left blank.
pub fn write_series_csv<W: io::Write>(buckets: &[MetricsBucket], out: W) -> Result<(), MonitorError> {
    let languages: BTreeSet<Language> = buckets.iter().map(|b| b.language).collect();
    let mut rows: BTreeMap<Month, BTreeMap<Language, Option<f64>>> = BTreeMap::new();
    for b in buckets {
        rows.entry(b.period).or_default().insert(b.language, b.precision);
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["period".to_owned()];
    header.extend(languages.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for (month, cells) in rows {
        let mut record = vec![month.to_string()];
        record.extend(
            languages
                .iter()
                .map(|l| cells.get(l).copied().flatten().map_or_else(String::new, |p| format!("{p:.4}"))),
        );
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn bucket(month: u32, language: Language, reviewed: u64, precision: f64) -> MetricsBucket {
        MetricsBucket {
            period: Month { year: 2024, month },
            language,
            reviewed,
            confirmed: (precision * reviewed as f64).round() as u64,
            precision: Some(precision),
        }
    }

    fn item(id: usize, month: u32, language: Language, score: f64, relevant: bool) -> ReviewedItem {
        ReviewedItem {
            article_id: format!("a{id}"),
            language,
            decided_at: Utc.with_ymd_and_hms(2024, month, 10, 12, 0, 0).unwrap(),
            relevance_score: score,
            relevant,
        }
    }

    #[test]
    fn one_month_bucket() {
        let items: Vec<_> = (0..10).map(|i| item(i, 3, Language::En, 0.9, i != 0)).collect();
        let b = bucket_metrics(&items, &ThresholdPolicy::uniform(0.5, 0.5));
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].precision, Some(0.9));
        assert_eq!(b[0].period.to_string(), "2024-03");
    }

    #[test]
    fn below_threshold_and_empty_months_excluded() {
        let items = vec![item(0, 3, Language::En, 0.2, true), item(1, 5, Language::Fr, 0.9, false)];
        let b = bucket_metrics(&items, &ThresholdPolicy::uniform(0.5, 0.5));
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].language, b[0].precision), (Language::Fr, Some(0.0)));
    }

    #[test]
    fn drop_in_final_month_alerts() {
        let series: Vec<_> = [0.90, 0.91, 0.90, 0.78]
            .iter()
            .enumerate()
            .map(|(i, &p)| bucket(i as u32 + 1, Language::En, 100, p))
            .collect();
        let r = detect_drift(&series, DriftRule::default());
        assert_eq!(r.alerts.len(), 1);
        let a = &r.alerts[0];
        assert_eq!(a.period, Month { year: 2024, month: 4 });
        assert!((a.reference - 0.903333).abs() < 1e-5);
        assert!(a.log_line().starts_with("DRIFT-ALERT language=en period=2024-04 observed=0.780 reference=0.903"));
    }

    #[test]
    fn flat_series_and_low_support_do_not_alert() {
        let flat: Vec<_> = (1..=4).map(|m| bucket(m, Language::En, 50, 0.9)).collect();
        assert!(detect_drift(&flat, DriftRule::default()).alerts.is_empty());
        let mut low = flat.clone();
        low[3] = bucket(4, Language::En, 3, 0.0);
        let r = detect_drift(&low, DriftRule::default());
        assert!(r.alerts.is_empty());
        assert!(matches!(r.languages[&Language::En], DriftStatus::InsufficientSupport { reviewed: 3, .. }));
    }

    #[test]
    fn short_history_is_a_status() {
        let short: Vec<_> = (1..=2).map(|m| bucket(m, Language::Ar, 50, 0.9)).collect();
        let r = detect_drift(&short, DriftRule::default());
        assert_eq!(r.languages[&Language::Ar], DriftStatus::InsufficientHistory { buckets: 2 });
        assert!(r.render().contains("DRIFT-STATUS language=ar insufficient-history"));
    }

    #[test]
    fn audit_queue() {
        let pred = |id: &str, food: f64| Prediction {
            article_id: id.into(),
            artifact_id: "m".into(),
            relevance_score: 0.9,
            category_scores: [food, 0.0, 0.0, 0.0, 0.0],
            scored_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        };
        let dec = |id: &str, cats: &[Category]| ReviewDecision {
            article_id: id.into(),
            annotator_id: "x".into(),
            relevant: true,
            categories: cats.iter().copied().collect(),
            decided_at: Utc.with_ymd_and_hms(2024, 1, 2, 0, 0, 0).unwrap(),
        };
        let preds = vec![pred("a", 0.95), pred("b", 0.95), pred("c", 0.97), pred("d", 0.5), pred("e", 0.99)];
        let decisions = HashMap::from([
            ("a".to_owned(), dec("a", &[])),
            ("b".to_owned(), dec("b", &[Category::FoodSecurity])),
            ("c".to_owned(), dec("c", &[Category::Health])),
            ("d".to_owned(), dec("d", &[])),
        ]);
        let q = audit_missing_labels(&preds, &decisions, Category::FoodSecurity, 0.9).unwrap();
        let ids: Vec<_> = q.iter().map(|e| e.article_id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
        assert!(audit_missing_labels(&preds, &decisions, Category::FoodSecurity, 1.5).is_err());
    }

    #[test]
    fn retraining_rules() {
        let alert = DriftAlert {
            language: Language::En,
            period: Month { year: 2024, month: 4 },
            observed: 0.78,
            reference: 0.9,
            delta: 0.05,
            rule: String::new(),
        };
        let p = RetrainPolicy::default();
        assert!(retraining_trigger(std::slice::from_ref(&alert), 500, &p).trigger);
        let r = retraining_trigger(&[alert], 50, &p);
        assert!(!r.trigger);
        assert!(r.reason.starts_with("insufficient new labels"));
        assert!(!retraining_trigger(&[], 10_000, &p).trigger);
    }

    #[test]
    fn csv_exports() {
        let buckets = vec![
            bucket(1, Language::En, 10, 0.9),
            bucket(1, Language::Ar, 10, 0.8),
            bucket(2, Language::En, 10, 0.7),
        ];
        let mut out = Vec::new();
        write_metrics_csv(&buckets, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "period,language,reviewed,confirmed,precision\n2024-01,en,10,9,0.9000\n2024-01,ar,10,8,0.8000\n2024-02,en,10,7,0.7000\n"
        );
        let mut out = Vec::new();
        write_series_csv(&buckets, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "period,en,ar\n2024-01,0.9000,0.8000\n2024-02,0.7000,\n");
    }

    #[test]
    fn month_serde() {
        let m: Month = serde_json::from_str("\"2024-04\"").unwrap();
        assert_eq!(m, Month { year: 2024, month: 4 });
        assert!(serde_json::from_str::<Month>("\"2024-13\"").is_err());
    }
}
