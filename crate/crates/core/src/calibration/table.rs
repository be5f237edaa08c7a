//! Operating tables and threshold selection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CalibrationError, StagingRecord};
use crate::types::{round_to, Language, Source};

/// Which weights the precision/recall estimate uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Plain sample counts.
    #[default]
    Raw,
    /// Each labeled item counts with its record weight.
    Weighted,
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Estimator::Raw),
            "weighted" => Ok(Estimator::Weighted),
            _ => Err(format!("unknown estimator `{s}` (expected raw or weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// `None` when nothing labeled scores at or above the threshold.
    pub precision: Option<f64>,
    /// `None` when the sample holds no positives.
    pub recall: Option<f64>,
    pub weekly_volume: u64,
    pub source_volumes: BTreeMap<Source, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OperatingTable {
    pub points: Vec<OperatingPoint>,
    pub warnings: Vec<String>,
}

/// A scored item as seen by the table builder. `positive` is `None` for
/// unlabeled items, which only count toward volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredItem {
    pub score: f64,
    pub positive: Option<bool>,
    pub weight: f64,
    pub source: Source,
}

/// Distinct labeled scores plus the endpoints 0 and 1, ascending.
///
/// Unlabeled scores are left out: between two labeled scores the estimate
/// does not change, so extra cut points would only shave projected volume.
pub fn candidate_thresholds(items: &[ScoredItem]) -> Vec<f64> {
    let mut t: Vec<f64> = items
        .iter()
        .filter(|i| i.positive.is_some())
        .map(|i| i.score)
        .chain([0.0, 1.0])
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn weekly(count: usize, window_days: u32) -> u64 {
    (count as f64 * 7.0 / f64::from(window_days)).round() as u64
}

/// Build the operating table at each of `thresholds`. Projected weekly
/// volume scales the count at or above the threshold from the staging
/// window to seven days.
pub fn operating_table(
    items: &[ScoredItem],
    thresholds: &[f64],
    window_days: u32,
    estimator: Estimator,
) -> Result<OperatingTable, CalibrationError> {
    if window_days == 0 {
        return Err(CalibrationError::Window);
    }
    let in_range = thresholds.iter().all(|t| (0.0..=1.0).contains(t));
    if !in_range || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CalibrationError::Thresholds);
    }
    if items.is_empty() {
        return Ok(OperatingTable {
            points: Vec::new(),
            warnings: vec!["no predictions in the staging window; table is empty".to_owned()],
        });
    }

    let weight = |i: &ScoredItem| match estimator {
        Estimator::Raw => 1.0,
        Estimator::Weighted => i.weight,
    };
    let mut labeled: Vec<(f64, bool, f64)> = items
        .iter()
        .filter_map(|i| i.positive.map(|p| (i.score, p, weight(i))))
        .collect();
    labeled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut cum_tp = vec![0.0];
    let mut cum_pp = vec![0.0];
    for &(_, positive, w) in &labeled {
        cum_pp.push(cum_pp.last().unwrap() + w);
        cum_tp.push(cum_tp.last().unwrap() + if positive { w } else { 0.0 });
    }
    let positives = *cum_tp.last().unwrap();

    let mut all: Vec<f64> = items.iter().map(|i| i.score).collect();
    all.sort_by(f64::total_cmp);
    let mut by_source: BTreeMap<Source, Vec<f64>> = BTreeMap::new();
    for i in items {
        by_source.entry(i.source).or_default().push(i.score);
    }
    for v in by_source.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    let at_or_above = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|&s| s < t);

    let mut warnings = Vec::new();
    if labeled.is_empty() {
        warnings.push("no labeled records; precision and recall undefined".to_owned());
    } else if positives == 0.0 {
        warnings.push("no positive labels; recall undefined".to_owned());
    }

    let points = thresholds
        .iter()
        .map(|&t| {
            let k = labeled.partition_point(|x| x.0 >= t);
            let (tp, pp) = (cum_tp[k], cum_pp[k]);
            OperatingPoint {
                threshold: t,
                precision: (pp > 0.0).then(|| tp / pp),
                recall: (positives > 0.0).then(|| tp / positives),
                weekly_volume: weekly(at_or_above(&all, t), window_days),
                source_volumes: by_source
                    .iter()
                    .map(|(s, v)| (*s, weekly(at_or_above(v, t), window_days)))
                    .collect(),
            }
        })
        .collect();
    Ok(OperatingTable { points, warnings })
}

/// Relevance operating table for one language over every candidate
/// threshold, or over `thresholds` when given.
pub fn relevance_table(
    records: &[StagingRecord],
    language: Option<Language>,
    thresholds: Option<&[f64]>,
    window_days: u32,
    estimator: Estimator,
) -> Result<OperatingTable, CalibrationError> {
    let items: Vec<ScoredItem> = records
        .iter()
        .filter(|r| language.is_none_or(|l| r.language == l))
        .map(|r| ScoredItem {
            score: r.relevance,
            positive: r.label.as_ref().map(|l| l.relevant),
            weight: r.weight,
            source: r.source,
        })
        .collect();
    let candidates;
    let thresholds = match thresholds {
        Some(t) => t,
        None => {
            candidates = candidate_thresholds(&items);
            &candidates
        }
    };
    operating_table(&items, thresholds, window_days, estimator)
}

/// Whether `value`, rounded to two decimals, reaches `floor`.
pub fn meets_floor(value: f64, floor: f64) -> bool {
    round_to(value, 2) >= floor - 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "floor", rename_all = "snake_case")]
pub enum SelectionMode {
    /// Smallest threshold whose precision reaches the floor.
    MinPrecision(f64),
    /// Highest precision among points whose recall reaches the floor.
    MaxPrecisionAtMinRecall(f64),
}

impl SelectionMode {
    pub fn parse(kind: &str, floor: f64) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&floor) {
            return Err(format!("floor {floor} outside [0, 1]"));
        }
        match kind.replace('-', "_").to_ascii_lowercase().as_str() {
            "min_precision" => Ok(SelectionMode::MinPrecision(floor)),
            "max_precision_at_min_recall" => Ok(SelectionMode::MaxPrecisionAtMinRecall(floor)),
            _ => Err(format!("unknown mode `{kind}` (expected min-precision or max-precision-at-min-recall)")),
        }
    }

    pub fn floor(self) -> f64 {
        match self {
            SelectionMode::MinPrecision(f) | SelectionMode::MaxPrecisionAtMinRecall(f) => f,
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::MinPrecision(p) => write!(f, "min-precision {p:.2}"),
            SelectionMode::MaxPrecisionAtMinRecall(r) => write!(f, "max-precision-at-min-recall {r:.2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("operating table is empty")]
    EmptyTable,
    #[error("no operating point satisfies {mode}{}", nearest_suffix(nearest_miss.as_deref()))]
    Infeasible {
        mode: SelectionMode,
        nearest_miss: Option<Box<OperatingPoint>>,
    },
}

fn nearest_suffix(p: Option<&OperatingPoint>) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"));
    match p {
        Some(p) => format!(
            "; nearest miss: threshold {:.3} precision {} recall {}",
            p.threshold,
            fmt(p.precision),
            fmt(p.recall)
        ),
        None => String::new(),
    }
}

/// Pick an operating point. `points` must be in ascending threshold order;
/// ties resolve to the lower threshold.
pub fn select_threshold(points: &[OperatingPoint], mode: SelectionMode) -> Result<OperatingPoint, SelectionError> {
    if points.is_empty() {
        return Err(SelectionError::EmptyTable);
    }
    let chosen = match mode {
        SelectionMode::MinPrecision(floor) => points
            .iter()
            .find(|p| p.precision.is_some_and(|v| meets_floor(v, floor))),
        SelectionMode::MaxPrecisionAtMinRecall(floor) => first_max_by(
            points
                .iter()
                .filter(|p| p.precision.is_some() && p.recall.is_some_and(|r| meets_floor(r, floor))),
            |p| p.precision.unwrap_or(0.0),
        ),
    };
    if let Some(p) = chosen {
        return Ok(p.clone());
    }
    let nearest = match mode {
        SelectionMode::MinPrecision(_) => first_max_by(points.iter().filter(|p| p.precision.is_some()), |p| {
            p.precision.unwrap_or(0.0)
        }),
        SelectionMode::MaxPrecisionAtMinRecall(_) => {
            first_max_by(points.iter().filter(|p| p.recall.is_some()), |p| p.recall.unwrap_or(0.0))
        }
    };
    Err(SelectionError::Infeasible {
        mode,
        nearest_miss: nearest.map(|p| Box::new(p.clone())),
    })
}

/// First element attaining the maximum key.
fn first_max_by<'a, T>(items: impl Iterator<Item = &'a T>, key: impl Fn(&T) -> f64) -> Option<&'a T> {
    let mut best: Option<(&T, f64)> = None;
    for item in items {
        let k = key(item);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((item, k));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(score: f64, positive: Option<bool>) -> ScoredItem {
        ScoredItem { score, positive, weight: 1.0, source: Source::Gdelt }
    }

    #[test]
    fn volume_scales_linearly() {
        let items: Vec<ScoredItem> = (0..734).map(|_| item(0.96, None)).collect();
        let t = operating_table(&items, &[0.951], 14, Estimator::Raw).unwrap();
        assert_eq!(t.points[0].weekly_volume, 367);
        assert_eq!(t.points[0].source_volumes[&Source::Gdelt], 367);
    }

    #[test]
    fn threshold_above_everything() {
        let items = vec![item(0.3, Some(true)), item(0.6, Some(false))];
        let t = operating_table(&items, &[0.0, 1.0], 7, Estimator::Raw).unwrap();
        let top = &t.points[1];
        assert_eq!(top.weekly_volume, 0);
        assert_eq!(top.recall, Some(0.0));
        assert_eq!(top.precision, None);
    }

    #[test]
    fn empty_input_warns() {
        let t = operating_table(&[], &[0.5], 14, Estimator::Raw).unwrap();
        assert!(t.points.is_empty());
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let items = vec![item(0.3, Some(true))];
        assert!(matches!(operating_table(&items, &[0.5, 0.4], 7, Estimator::Raw), Err(CalibrationError::Thresholds)));
        assert!(matches!(operating_table(&items, &[1.5], 7, Estimator::Raw), Err(CalibrationError::Thresholds)));
        assert!(matches!(operating_table(&items, &[0.5], 0, Estimator::Raw), Err(CalibrationError::Window)));
    }

    #[test]
    fn weighted_estimator_uses_record_weights() {
        let mut items = vec![item(0.9, Some(true)), item(0.9, Some(false))];
        items[1].weight = 3.0;
        let raw = operating_table(&items, &[0.5], 7, Estimator::Raw).unwrap();
        let weighted = operating_table(&items, &[0.5], 7, Estimator::Weighted).unwrap();
        assert_eq!(raw.points[0].precision, Some(0.5));
        assert_eq!(weighted.points[0].precision, Some(0.25));
    }

    #[test]
    fn perfect_classifier_takes_lowest_candidate() {
        let items = vec![item(0.2, Some(true)), item(0.7, Some(true))];
        let t = operating_table(&items, &candidate_thresholds(&items), 7, Estimator::Raw).unwrap();
        let p = select_threshold(&t.points, SelectionMode::MinPrecision(0.9)).unwrap();
        assert_eq!(p.threshold, 0.0);
    }

    #[test]
    fn infeasible_carries_nearest_miss() {
        let items = vec![
            item(0.2, Some(true)),
            item(0.7, Some(false)),
            item(0.8, Some(true)),
            item(0.9, Some(false)),
        ];
        let t = operating_table(&items, &candidate_thresholds(&items), 7, Estimator::Raw).unwrap();
        match select_threshold(&t.points, SelectionMode::MinPrecision(0.999)) {
            Ok(_) => panic!("expected infeasible"),
            Err(SelectionError::Infeasible { nearest_miss, .. }) => {
                // precision 0.5 at 0.0, 0.2 and 0.8: the lowest wins
                assert_eq!(nearest_miss.unwrap().threshold, 0.0);
            }
            Err(e) => panic!("{e}"),
        }
        assert_eq!(select_threshold(&[], SelectionMode::MinPrecision(0.5)), Err(SelectionError::EmptyTable));
    }

    #[test]
    fn floor_uses_two_decimals() {
        assert!(meets_floor(0.615, 0.62));
        assert!(!meets_floor(0.6149, 0.62));
        assert!(meets_floor(0.8, 0.8));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(SelectionMode::parse("min-precision", 0.9), Ok(SelectionMode::MinPrecision(0.9)));
        assert_eq!(
            SelectionMode::parse("max_precision_at_min_recall", 0.85),
            Ok(SelectionMode::MaxPrecisionAtMinRecall(0.85))
        );
        assert!(SelectionMode::parse("min-precision", 1.2).is_err());
        assert!(SelectionMode::parse("best", 0.5).is_err());
    }
}
