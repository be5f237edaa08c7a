//! Shadow evaluation: run a candidate pipeline next to a baseline over the
//! same article stream, compare stage volumes, and compare per-category F1
//! between an offline test set and live reviewed traffic.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdPolicy;
use crate::classifier::{ScoreError, Scorer};
use crate::ratio::Multiplier;
use crate::types::{Article, Category, Language, Prediction, ReviewDecision, Source};

/// One side of a shadow comparison.
pub struct PipelineConfig<'a> {
    pub label: String,
    pub scorer: &'a dyn Scorer,
    pub policy: ThresholdPolicy,
    pub sources: BTreeSet<Source>,
}

/// Per-stage article counts over a period.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub period_days: f64,
    pub crawled: u64,
    pub predicted: u64,
    #[serde(default)]
    pub predicted_by_language: BTreeMap<Language, u64>,
    pub reviewed: u64,
    #[serde(default)]
    pub reviewed_by_language: BTreeMap<Language, u64>,
    pub confirmed: u64,
    #[serde(default)]
    pub confirmed_by_language: BTreeMap<Language, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct CountsError {
    pub field: String,
    pub message: String,
}

fn counts_error(field: impl Into<String>, message: impl Into<String>) -> CountsError {
    CountsError { field: field.into(), message: message.into() }
}

impl StageCounts {
    /// Checks `confirmed <= reviewed <= predicted <= crawled` overall and per
    /// language, and that per-language predictions add up to the total.
    /// Per-language reviewed/confirmed may fall short of the totals, since
    /// published counts are not always broken down completely.
    pub fn validate(&self) -> Result<(), CountsError> {
        if self.period_days <= 0.0 || !self.period_days.is_finite() {
            return Err(counts_error("period_days", "must be positive"));
        }
        if self.predicted > self.crawled {
            return Err(counts_error("predicted", "exceeds crawled"));
        }
        if self.reviewed > self.predicted {
            return Err(counts_error("reviewed", "exceeds predicted"));
        }
        if self.confirmed > self.reviewed {
            return Err(counts_error("confirmed", "exceeds reviewed"));
        }
        let sum = |m: &BTreeMap<Language, u64>| m.values().sum::<u64>();
        if !self.predicted_by_language.is_empty() && sum(&self.predicted_by_language) != self.predicted {
            return Err(counts_error("predicted_by_language", "does not sum to predicted"));
        }
        if sum(&self.reviewed_by_language) > self.reviewed {
            return Err(counts_error("reviewed_by_language", "sums past reviewed"));
        }
        if sum(&self.confirmed_by_language) > self.confirmed {
            return Err(counts_error("confirmed_by_language", "sums past confirmed"));
        }
        for (lang, &c) in &self.confirmed_by_language {
            let r = self.reviewed_by_language.get(lang).copied().unwrap_or(0);
            if c > r {
                return Err(counts_error(format!("confirmed_by_language.{lang}"), "exceeds reviewed"));
            }
        }
        for (lang, &r) in &self.reviewed_by_language {
            let p = self.predicted_by_language.get(lang).copied().unwrap_or(self.predicted);
            if r > p {
                return Err(counts_error(format!("reviewed_by_language.{lang}"), "exceeds predicted"));
            }
        }
        Ok(())
    }

    fn languages(&self) -> BTreeSet<Language> {
        self.predicted_by_language
            .keys()
            .chain(self.reviewed_by_language.keys())
            .chain(self.confirmed_by_language.keys())
            .copied()
            .collect()
    }

    fn weekly(&self, count: u64) -> f64 {
        count as f64 * 7.0 / self.period_days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShadowOutcome {
    pub baseline: StageCounts,
    pub candidate: StageCounts,
    /// Articles dropped from both sides because either scorer failed.
    pub excluded: Vec<String>,
}

enum Side {
    Skipped,
    Unscored,
    Scored(Prediction),
}

fn score_side(cfg: &PipelineConfig<'_>, article: &Article) -> Result<Side, ScoreError> {
    if !cfg.sources.contains(&article.source) {
        return Ok(Side::Skipped);
    }
    match cfg.scorer.score(article) {
        Ok(p) => Ok(Side::Scored(p)),
        Err(ScoreError::UnsupportedLanguage(_)) => Ok(Side::Unscored),
        Err(e) => Err(e),
    }
}

fn tally(counts: &mut StageCounts, side: &Side, cfg: &PipelineConfig<'_>, article: &Article, decision: Option<&ReviewDecision>) {
    let prediction = match side {
        Side::Skipped => return,
        Side::Unscored => {
            counts.crawled += 1;
            return;
        }
        Side::Scored(p) => p,
    };
    counts.crawled += 1;
    if !cfg.policy.is_relevant(prediction, article.language) {
        return;
    }
    let lang = article.language;
    counts.predicted += 1;
    *counts.predicted_by_language.entry(lang).or_default() += 1;
    if let Some(d) = decision {
        counts.reviewed += 1;
        *counts.reviewed_by_language.entry(lang).or_default() += 1;
        if d.relevant {
            counts.confirmed += 1;
            *counts.confirmed_by_language.entry(lang).or_default() += 1;
        }
    }
}

/// Score `stream` with both configurations and count each stage per side.
/// `decisions` holds consensus review decisions keyed by article id; they
/// apply to whichever side predicted the article relevant.
pub fn shadow_run(
    stream: &[Article],
    decisions: &HashMap<String, ReviewDecision>,
    baseline: &PipelineConfig<'_>,
    candidate: &PipelineConfig<'_>,
    period_days: f64,
) -> ShadowOutcome {
    let mut out = ShadowOutcome {
        baseline: StageCounts { period_days, ..Default::default() },
        candidate: StageCounts { period_days, ..Default::default() },
        excluded: Vec::new(),
    };
    for article in stream {
        let (b, c) = match (score_side(baseline, article), score_side(candidate, article)) {
            (Ok(b), Ok(c)) => (b, c),
            (b, c) => {
                for e in [b.err(), c.err()].into_iter().flatten() {
                    tracing::warn!(article = %article.id, error = %e, "excluded from shadow comparison");
                }
                out.excluded.push(article.id.clone());
                continue;
            }
        };
        let decision = decisions.get(&article.id);
        tally(&mut out.baseline, &b, baseline, article, decision);
        tally(&mut out.candidate, &c, candidate, article, decision);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stage: String,
    /// Weekly rates.
    pub baseline: f64,
    pub deployment: f64,
    pub multiplier: Multiplier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageRow {
    pub language: Language,
    pub baseline_predicted: f64,
    pub deployment_predicted: f64,
    pub predicted_multiplier: Multiplier,
    pub baseline_confirmed: u64,
    pub baseline_reviewed: u64,
    pub deployment_confirmed: u64,
    pub deployment_reviewed: u64,
    /// confirmed / reviewed; `None` when nothing was reviewed.
    pub baseline_precision: Option<f64>,
    pub deployment_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub baseline: StageCounts,
    pub deployment: StageCounts,
    pub stages: Vec<StageRow>,
    pub languages: Vec<LanguageRow>,
    pub baseline_precision: Option<f64>,
    pub deployment_precision: Option<f64>,
}

impl ComparisonReport {
    pub fn stage(&self, name: &str) -> Option<&StageRow> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn language(&self, language: Language) -> Option<&LanguageRow> {
        self.languages.iter().find(|l| l.language == language)
    }

    /// Aligned text table in pipeline-stage order.
    pub fn render(&self) -> String {
        let mut rows = vec![[
            "stage".to_owned(),
            "baseline".into(),
            "deployment".into(),
            "multiplier".into(),
        ]];
        let stage_row = |label: &str, s: &StageRow| [label.to_owned(), rate(s.baseline), rate(s.deployment), s.multiplier.to_string()];
        let find = |n: &str| self.stage(n).expect("stage present");
        rows.push(stage_row("crawled", find("crawled")));
        rows.push(stage_row("predicted relevant", find("predicted_relevant")));
        for l in &self.languages {
            rows.push([
                format!("-- {}", l.language),
                rate(l.baseline_predicted),
                rate(l.deployment_predicted),
                l.predicted_multiplier.to_string(),
            ]);
        }
        let confirmed = find("confirmed_relevant");
        rows.push([
            "confirmed relevant".into(),
            fraction(self.baseline.confirmed, self.baseline.reviewed),
            fraction(self.deployment.confirmed, self.deployment.reviewed),
            confirmed.multiplier.to_string(),
        ]);
        for l in &self.languages {
            rows.push([
                format!("-- {}", l.language),
                fraction(l.baseline_confirmed, l.baseline_reviewed),
                fraction(l.deployment_confirmed, l.deployment_reviewed),
                String::new(),
            ]);
        }
        rows.push(stage_row("review effort", find("reviewed")));
        let mut out = crate::calibration::aligned_table(&rows);
        out.push('\n');
        let mut prec = vec![["precision".to_owned(), "baseline".into(), "deployment".into()]];
        prec.push(["all".into(), ratio(self.baseline_precision), ratio(self.deployment_precision)]);
        for l in &self.languages {
            prec.push([l.language.to_string(), ratio(l.baseline_precision), ratio(l.deployment_precision)]);
        }
        out.push_str(&crate::calibration::aligned_table(&prec));
        out
    }
}

fn rate(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

fn fraction(confirmed: u64, reviewed: u64) -> String {
    if reviewed == 0 {
        "0".to_owned()
    } else {
        format!("{confirmed}/{reviewed}")
    }
}

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2}"))
}

fn precision(confirmed: u64, reviewed: u64) -> Option<f64> {
    (reviewed > 0).then(|| confirmed as f64 / reviewed as f64)
}

/// Compare two periods stage by stage on a per-week basis.
pub fn comparison_report(baseline: &StageCounts, deployment: &StageCounts) -> Result<ComparisonReport, CountsError> {
    baseline.validate()?;
    deployment.validate()?;
    let stage = |name: &str, f: fn(&StageCounts) -> u64| {
        let (b, d) = (baseline.weekly(f(baseline)), deployment.weekly(f(deployment)));
        StageRow { stage: name.to_owned(), baseline: b, deployment: d, multiplier: Multiplier::of(b, d) }
    };
    let stages = vec![
        stage("crawled", |c| c.crawled),
        stage("predicted_relevant", |c| c.predicted),
        stage("reviewed", |c| c.reviewed),
        stage("confirmed_relevant", |c| c.confirmed),
    ];
    let languages = baseline
        .languages()
        .union(&deployment.languages())
        .map(|&lang| {
            let get = |m: &BTreeMap<Language, u64>| m.get(&lang).copied().unwrap_or(0);
            let bp = baseline.weekly(get(&baseline.predicted_by_language));
            let dp = deployment.weekly(get(&deployment.predicted_by_language));
            let (bc, br) = (get(&baseline.confirmed_by_language), get(&baseline.reviewed_by_language));
            let (dc, dr) = (get(&deployment.confirmed_by_language), get(&deployment.reviewed_by_language));
            LanguageRow {
                language: lang,
                baseline_predicted: bp,
                deployment_predicted: dp,
                predicted_multiplier: Multiplier::of(bp, dp),
                baseline_confirmed: bc,
                baseline_reviewed: br,
                deployment_confirmed: dc,
                deployment_reviewed: dr,
                baseline_precision: precision(bc, br),
                deployment_precision: precision(dc, dr),
            }
        })
        .collect();
    Ok(ComparisonReport {
        baseline: baseline.clone(),
        deployment: deployment.clone(),
        stages,
        languages,
        baseline_precision: precision(baseline.confirmed, baseline.reviewed),
        deployment_precision: precision(deployment.confirmed, deployment.reviewed),
    })
}

/// F1 for one (category, language) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    F1(f64),
    /// No positive labels on this side.
    #[serde(with = "no_labels")]
    NoLabels,
}

mod no_labels {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("no_labels")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let v = String::deserialize(d)?;
        if v.eq_ignore_ascii_case("no_labels") || v.eq_ignore_ascii_case("no labels") {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected a number or \"no_labels\", got {v:?}")))
        }
    }
}

impl CellValue {
    /// `2TP / (2TP + FP + FN)`, the harmonic mean of precision and recall.
    /// A side with no positive labels is `NoLabels`.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        if tp + fn_ == 0 {
            CellValue::NoLabels
        } else {
            CellValue::F1(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
        }
    }

    pub fn f1(self) -> Option<f64> {
        match self {
            CellValue::F1(v) => Some(v),
            CellValue::NoLabels => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryEval {
    pub cells: BTreeMap<Category, BTreeMap<Language, CellValue>>,
}

impl CategoryEval {
    pub fn get(&self, category: Category, language: Language) -> Option<CellValue> {
        self.cells.get(&category).and_then(|m| m.get(&language)).copied()
    }

    pub fn insert(&mut self, category: Category, language: Language, value: CellValue) {
        self.cells.entry(category).or_default().insert(language, value);
    }
}

/// A reviewed article as seen by the category evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryObservation {
    pub language: Language,
    pub predicted: BTreeSet<Category>,
    /// Consensus categories; empty when the article was judged irrelevant.
    pub actual: BTreeSet<Category>,
}

impl CategoryObservation {
    pub fn new(policy: &ThresholdPolicy, language: Language, prediction: &Prediction, decision: &ReviewDecision) -> Self {
        CategoryObservation {
            language,
            predicted: policy.predicted_categories(prediction).into_iter().collect(),
            actual: if decision.relevant { decision.categories.clone() } else { BTreeSet::new() },
        }
    }
}

/// Per-(category, language) F1 over reviewed observations.
pub fn evaluate_categories(observations: &[CategoryObservation]) -> CategoryEval {
    let mut counts: BTreeMap<(Category, Language), (u64, u64, u64)> = BTreeMap::new();
    for o in observations {
        for c in Category::ALL {
            let cell = counts.entry((c, o.language)).or_default();
            match (o.predicted.contains(&c), o.actual.contains(&c)) {
                (true, true) => cell.0 += 1,
                (true, false) => cell.1 += 1,
                (false, true) => cell.2 += 1,
                (false, false) => {}
            }
        }
    }
    let mut eval = CategoryEval::default();
    for ((c, l), (tp, fp, fn_)) in counts {
        eval.insert(c, l, CellValue::from_counts(tp, fp, fn_));
    }
    eval
}

/// When a cell counts as discrepant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRule {
    pub max_gap: f64,
    /// Also flag live F1 rising above offline by more than `max_gap`.
    pub two_sided: bool,
}

impl Default for DiscrepancyRule {
    fn default() -> Self {
        DiscrepancyRule { max_gap: 0.2, two_sided: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Live F1 fell short of offline by more than the allowed gap.
    Drop,
    /// Live F1 exceeded offline by more than the allowed gap (two-sided rule only).
    Rise,
    NoLabels,
    /// One side has no value for the cell.
    Missing,
}

impl CellStatus {
    pub fn is_flag(self) -> bool {
        matches!(self, CellStatus::Drop | CellStatus::Rise | CellStatus::NoLabels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyRow {
    pub category: Category,
    pub language: Language,
    pub offline: Option<CellValue>,
    pub live: Option<CellValue>,
    /// live minus offline.
    pub gap: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub rule: DiscrepancyRule,
    pub rows: Vec<DiscrepancyRow>,
}

impl DiscrepancyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &DiscrepancyRow> {
        self.rows.iter().filter(|r| r.status.is_flag())
    }

    pub fn has_flags(&self) -> bool {
        self.flagged().next().is_some()
    }

    pub fn render(&self) -> String {
        let cell = |v: Option<CellValue>| match v {
            None => "missing".to_owned(),
            Some(CellValue::NoLabels) => "no labels".to_owned(),
            Some(CellValue::F1(f)) => format!("{f:.3}"),
        };
        let mut rows = vec![[
            "category".to_owned(),
            "language".into(),
            "offline".into(),
            "live".into(),
            "gap".into(),
            "status".into(),
        ]];
        for r in &self.rows {
            let status = match r.status {
                CellStatus::Ok => "ok",
                CellStatus::Drop => "FLAG drop",
                CellStatus::Rise => "FLAG rise",
                CellStatus::NoLabels => "FLAG no labels",
                CellStatus::Missing => "missing",
            };
            rows.push([
                r.category.to_string(),
                r.language.to_string(),
                cell(r.offline),
                cell(r.live),
                r.gap.map_or_else(String::new, |g| format!("{g:+.3}")),
                status.to_owned(),
            ]);
        }
        let mut out = crate::calibration::aligned_table(&rows);
        let _ = writeln!(out, "flags: {}", self.flagged().count());
        out
    }
}

/// Compare offline and live category F1 cell by cell.
pub fn category_discrepancy(offline: &CategoryEval, live: &CategoryEval, rule: DiscrepancyRule) -> DiscrepancyReport {
    let mut keys: BTreeSet<(Category, Language)> = BTreeSet::new();
    for eval in [offline, live] {
        for (c, m) in &eval.cells {
            keys.extend(m.keys().map(|l| (*c, *l)));
        }
    }
    let eps = 1e-9;
    let rows = keys
        .into_iter()
        .map(|(category, language)| {
            let (o, l) = (offline.get(category, language), live.get(category, language));
            let (gap, status) = match (o, l) {
                (_, Some(CellValue::NoLabels)) => (None, CellStatus::NoLabels),
                (Some(CellValue::F1(a)), Some(CellValue::F1(b))) => {
                    let gap = b - a;
                    let status = if -gap > rule.max_gap + eps {
                        CellStatus::Drop
                    } else if rule.two_sided && gap > rule.max_gap + eps {
                        CellStatus::Rise
                    } else {
                        CellStatus::Ok
                    };
                    (Some(gap), status)
                }
                _ => (None, CellStatus::Missing),
            };
            DiscrepancyRow { category, language, offline: o, live: l, gap, status }
        })
        .collect();
    DiscrepancyReport { rule, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::RecordedScorer;
    use chrono::{TimeZone, Utc};

    fn article(id: &str, source: Source, language: Language) -> Article {
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
        Article {
            id: id.into(),
            source,
            url: format!("https://x.example/{id}"),
            language,
            title: id.into(),
            body: String::new(),
            published_at: t,
            fetched_at: t,
        }
    }

    fn pred(id: &str, score: f64) -> Prediction {
        Prediction {
            article_id: id.into(),
            artifact_id: "rec".into(),
            relevance_score: score,
            category_scores: [0.0; 5],
            scored_at: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap(),
        }
    }

    fn decision(id: &str, relevant: bool) -> ReviewDecision {
        ReviewDecision {
            article_id: id.into(),
            annotator_id: "a".into(),
            relevant,
            categories: BTreeSet::new(),
            decided_at: Utc.with_ymd_and_hms(2024, 3, 2, 0, 0, 0).unwrap(),
        }
    }

    fn all_sources() -> BTreeSet<Source> {
        Source::ALL.into_iter().collect()
    }

    #[test]
    fn identical_configs_give_identical_counts() {
        let stream = vec![
            article("a", Source::Gdelt, Language::En),
            article("b", Source::Gdelt, Language::Fr),
            article("c", Source::Newsapi, Language::Other),
        ];
        let scorer = RecordedScorer::new("rec", [pred("a", 0.9), pred("b", 0.2)]);
        let cfg = || PipelineConfig {
            label: "x".into(),
            scorer: &scorer,
            policy: ThresholdPolicy::uniform(0.5, 0.5),
            sources: all_sources(),
        };
        let decisions = HashMap::from([("a".to_owned(), decision("a", true))]);
        let out = shadow_run(&stream, &decisions, &cfg(), &cfg(), 7.0);
        assert_eq!(out.baseline, out.candidate);
        assert_eq!(out.baseline.crawled, 3);
        assert_eq!(out.baseline.predicted, 1);
        assert_eq!(out.baseline.confirmed, 1);
    }

    #[test]
    fn threshold_one_predicts_nothing_and_failures_pair_up() {
        let stream = vec![article("a", Source::Gdelt, Language::En), article("b", Source::Gdelt, Language::En)];
        let full = RecordedScorer::new("rec", [pred("a", 0.9), pred("b", 0.9)]);
        let partial = RecordedScorer::new("rec", [pred("a", 0.9)]);
        let baseline = PipelineConfig {
            label: "base".into(),
            scorer: &full,
            policy: ThresholdPolicy::uniform(0.5, 0.5),
            sources: all_sources(),
        };
        let candidate = PipelineConfig {
            label: "cand".into(),
            scorer: &partial,
            policy: ThresholdPolicy::uniform(1.0, 0.5),
            sources: all_sources(),
        };
        let out = shadow_run(&stream, &HashMap::new(), &baseline, &candidate, 7.0);
        assert_eq!(out.excluded, ["b"]);
        assert_eq!(out.baseline.crawled, 1);
        assert_eq!(out.candidate.crawled, 1);
        assert_eq!(out.baseline.predicted, 1);
        assert_eq!(out.candidate.predicted, 0);
    }

    #[test]
    fn source_filter_limits_crawl() {
        let stream = vec![article("a", Source::Gdelt, Language::En), article("b", Source::Osac, Language::En)];
        let scorer = RecordedScorer::new("rec", [pred("a", 0.9), pred("b", 0.9)]);
        let side = |sources: BTreeSet<Source>| PipelineConfig {
            label: "x".into(),
            scorer: &scorer,
            policy: ThresholdPolicy::uniform(0.5, 0.5),
            sources,
        };
        let (baseline, candidate) = (side([Source::Osac, Source::Newsapi].into()), side(all_sources()));
        let out = shadow_run(&stream, &HashMap::new(), &baseline, &candidate, 7.0);
        assert_eq!((out.baseline.crawled, out.candidate.crawled), (1, 2));
    }

    fn counts(crawled: u64, predicted: &[(Language, u64)], reviewed: (u64, &[(Language, u64)]), confirmed: (u64, &[(Language, u64)])) -> StageCounts {
        StageCounts {
            period_days: 7.0,
            crawled,
            predicted: predicted.iter().map(|p| p.1).sum(),
            predicted_by_language: predicted.iter().copied().collect(),
            reviewed: reviewed.0,
            reviewed_by_language: reviewed.1.iter().copied().collect(),
            confirmed: confirmed.0,
            confirmed_by_language: confirmed.1.iter().copied().collect(),
        }
    }

    #[test]
    fn equal_periods_give_unit_multipliers() {
        let c = counts(100, &[(Language::En, 10)], (5, &[(Language::En, 5)]), (4, &[(Language::En, 4)]));
        let r = comparison_report(&c, &c).unwrap();
        assert!(r.stages.iter().all(|s| s.multiplier == Multiplier::Ratio(1.0)));
        assert_eq!(r.render(), comparison_report(&c, &c).unwrap().render());
    }

    #[test]
    fn zero_baseline_is_new() {
        let b = counts(100, &[(Language::En, 10)], (5, &[(Language::En, 5)]), (4, &[(Language::En, 4)]));
        let d = counts(
            200,
            &[(Language::En, 10), (Language::Fr, 4)],
            (6, &[(Language::En, 5), (Language::Fr, 1)]),
            (5, &[(Language::En, 4), (Language::Fr, 1)]),
        );
        let r = comparison_report(&b, &d).unwrap();
        assert_eq!(r.language(Language::Fr).unwrap().predicted_multiplier, Multiplier::New);
        assert_eq!(r.language(Language::Fr).unwrap().baseline_precision, None);
        assert!(r.render().contains("new"));
    }

    #[test]
    fn invalid_counts_are_rejected() {
        let mut c = counts(10, &[(Language::En, 20)], (0, &[]), (0, &[]));
        assert_eq!(c.validate().unwrap_err().field, "predicted");
        c.crawled = 30;
        c.predicted_by_language.insert(Language::Fr, 1);
        assert_eq!(c.validate().unwrap_err().field, "predicted_by_language");
    }

    #[test]
    fn week_normalization() {
        let mut b = counts(100, &[(Language::En, 10)], (5, &[]), (4, &[]));
        let mut d = b.clone();
        b.period_days = 7.0;
        d.period_days = 14.0;
        let r = comparison_report(&b, &d).unwrap();
        assert_eq!(r.stage("crawled").unwrap().deployment, 50.0);
        assert_eq!(r.stage("crawled").unwrap().multiplier.one_decimal(), Some(0.5));
        d.period_days = 0.0;
        assert!(comparison_report(&b, &d).is_err());
    }

    #[test]
    fn f1_cells() {
        assert_eq!(CellValue::from_counts(0, 3, 0), CellValue::NoLabels);
        assert_eq!(CellValue::from_counts(0, 3, 2), CellValue::F1(0.0));
        assert_eq!(CellValue::from_counts(3, 1, 1), CellValue::F1(0.75));
        let v: CellValue = serde_json::from_str("\"No labels\"").unwrap();
        assert_eq!(v, CellValue::NoLabels);
        assert_eq!(serde_json::to_string(&CellValue::F1(0.5)).unwrap(), "0.5");
        assert_eq!(serde_json::to_string(&CellValue::NoLabels).unwrap(), "\"no_labels\"");
    }

    #[test]
    fn identical_evals_have_no_flags() {
        let mut e = CategoryEval::default();
        e.insert(Category::Health, Language::En, CellValue::F1(0.7));
        e.insert(Category::Education, Language::Fr, CellValue::F1(0.2));
        let r = category_discrepancy(&e, &e, DiscrepancyRule::default());
        assert!(!r.has_flags());
    }

    #[test]
    fn drops_and_missing_cells() {
        let mut off = CategoryEval::default();
        let mut live = CategoryEval::default();
        off.insert(Category::FoodSecurity, Language::En, CellValue::F1(0.679));
        live.insert(Category::FoodSecurity, Language::En, CellValue::F1(0.014));
        off.insert(Category::Health, Language::Ar, CellValue::F1(0.5));
        off.insert(Category::AidSecurity, Language::Fr, CellValue::F1(0.745));
        live.insert(Category::AidSecurity, Language::Fr, CellValue::F1(0.947));
        let r = category_discrepancy(&off, &live, DiscrepancyRule::default());
        let status: Vec<_> = r.rows.iter().map(|x| (x.category, x.status)).collect();
        assert_eq!(
            status,
            [
                (Category::FoodSecurity, CellStatus::Drop),
                (Category::AidSecurity, CellStatus::Ok),
                (Category::Health, CellStatus::Missing),
            ]
        );
        let two = category_discrepancy(&off, &live, DiscrepancyRule { two_sided: true, ..Default::default() });
        assert_eq!(two.flagged().count(), 2);
        assert!(r.render().contains("FLAG drop"));
    }
}
