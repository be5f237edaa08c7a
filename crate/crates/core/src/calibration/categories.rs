//! Pooled per-category thresholds.

use std::collections::BTreeMap;

use serde::Serialize;

use super::table::{candidate_thresholds, operating_table, select_threshold, Estimator, OperatingPoint, ScoredItem};
use super::{CalibrationError, SelectionError, SelectionMode, StagingRecord, ThresholdPolicy};
use crate::types::Category;

pub const DEFAULT_CATEGORY_FLOOR: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CategoryOutcome {
    Selected { point: OperatingPoint },
    /// The sample holds no positive label for the category.
    NoLabels,
    BelowFloor { nearest_miss: Option<OperatingPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCalibration {
    pub floor: f64,
    pub outcomes: BTreeMap<Category, CategoryOutcome>,
}

impl CategoryCalibration {
    pub fn is_feasible(&self) -> bool {
        self.outcomes.values().all(|o| matches!(o, CategoryOutcome::Selected { .. }))
    }

    pub fn thresholds(&self) -> BTreeMap<Category, f64> {
        self.outcomes
            .iter()
            .filter_map(|(c, o)| match o {
                CategoryOutcome::Selected { point } => Some((*c, point.threshold)),
                _ => None,
            })
            .collect()
    }

    /// One line per category: the selected threshold, or why none was.
    pub fn render(&self) -> String {
        let metric = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"));
        let mut rows = vec![["category".to_owned(), "threshold".into(), "precision".into(), "recall".into(), "status".into()]];
        for (c, o) in &self.outcomes {
            let row = match o {
                CategoryOutcome::Selected { point } => [
                    c.to_string(),
                    format!("{:.3}", point.threshold),
                    metric(point.precision),
                    metric(point.recall),
                    "selected".into(),
                ],
                CategoryOutcome::NoLabels => {
                    [c.to_string(), "-".into(), "-".into(), "-".into(), "no labels".into()]
                }
                CategoryOutcome::BelowFloor { nearest_miss } => match nearest_miss {
                    Some(p) => [
                        c.to_string(),
                        format!("{:.3}", p.threshold),
                        metric(p.precision),
                        metric(p.recall),
                        format!("below floor {:.2} (nearest miss)", self.floor),
                    ],
                    None => [c.to_string(), "-".into(), "-".into(), "-".into(), format!("below floor {:.2}", self.floor)],
                },
            };
            rows.push(row);
        }
        super::aligned_table(&rows)
    }

    /// Write selected thresholds into `policy`; infeasible categories keep
    /// their current value.
    pub fn apply_to(&self, policy: &mut ThresholdPolicy) {
        policy.categories.extend(self.thresholds());
    }
}

/// One threshold per category across all languages, chosen as the
/// smallest threshold reaching `floor` precision on the pooled sample.
/// A record counts as a positive for a category when it is labeled
/// relevant with that category.
pub fn calibrate_categories(
    records: &[StagingRecord],
    floor: f64,
    window_days: u32,
) -> Result<CategoryCalibration, CalibrationError> {
    let mut outcomes = BTreeMap::new();
    for category in Category::ALL {
        let items: Vec<ScoredItem> = records
            .iter()
            .map(|r| ScoredItem {
                score: r.category_score(category),
                positive: r.label.as_ref().map(|l| l.relevant && l.categories.contains(&category)),
                weight: r.weight,
                source: r.source,
            })
            .collect();
        let outcome = if !items.iter().any(|i| i.positive == Some(true)) {
            CategoryOutcome::NoLabels
        } else {
            let table = operating_table(&items, &candidate_thresholds(&items), window_days, Estimator::Raw)?;
            match select_threshold(&table.points, SelectionMode::MinPrecision(floor)) {
                Ok(point) => CategoryOutcome::Selected { point },
                Err(SelectionError::Infeasible { nearest_miss, .. }) => CategoryOutcome::BelowFloor {
                    nearest_miss: nearest_miss.map(|b| *b),
                },
                Err(SelectionError::EmptyTable) => CategoryOutcome::BelowFloor { nearest_miss: None },
            }
        };
        outcomes.insert(category, outcome);
    }
    Ok(CategoryCalibration { floor, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::SampleLabel;
    use crate::types::{Language, Source};

    fn rec(id: usize, health: f64, relevant: bool, cats: &[Category]) -> StagingRecord {
        StagingRecord {
            article_id: format!("r{id}"),
            language: [Language::En, Language::Fr, Language::Ar][id % 3],
            source: Source::Gdelt,
            relevance: 0.9,
            categories: BTreeMap::from([(Category::Health, health), (Category::Protection, 0.5)]),
            label: Some(SampleLabel { relevant, categories: cats.iter().copied().collect() }),
            weight: 1.0,
        }
    }

    #[test]
    fn health_threshold_matches_sweep() {
        // scores 0.05..0.95; positives at 0.7 and above except one negative at 0.75
        let mut records = Vec::new();
        for i in 0..19 {
            let s = 0.05 + 0.05 * i as f64;
            let s = (s * 100.0).round() / 100.0;
            let positive = (s >= 0.7 && s != 0.75) || s == 0.35 || s == 0.5;
            let cats: &[Category] = if positive { &[Category::Health, Category::Protection] } else { &[] };
            records.push(rec(i, s, positive, cats));
        }
        // independent sweep over distinct scores
        let expected = {
            let mut scores: Vec<f64> = records.iter().map(|r| r.category_score(Category::Health)).collect();
            scores.sort_by(f64::total_cmp);
            scores
                .into_iter()
                .find(|&t| {
                    let above: Vec<_> = records.iter().filter(|r| r.category_score(Category::Health) >= t).collect();
                    let tp = above
                        .iter()
                        .filter(|r| r.label.as_ref().unwrap().categories.contains(&Category::Health))
                        .count();
                    ((tp as f64 / above.len() as f64) * 100.0).round() / 100.0 >= 0.8
                })
                .unwrap()
        };
        assert_eq!(expected, 0.7);
        let cal = calibrate_categories(&records, 0.8, 14).unwrap();
        assert_eq!(cal.thresholds()[&Category::Health], expected);
        assert_eq!(cal.outcomes[&Category::FoodSecurity], CategoryOutcome::NoLabels);
        assert!(!cal.is_feasible());
    }

    #[test]
    fn all_positive_category_takes_lowest_candidate() {
        let records: Vec<_> = (0..5).map(|i| rec(i, 0.2 * i as f64, true, &[Category::Health])).collect();
        let cal = calibrate_categories(&records, 0.8, 14).unwrap();
        assert_eq!(cal.thresholds()[&Category::Health], 0.0);
    }

    #[test]
    fn apply_keeps_infeasible_values() {
        let records: Vec<_> = (0..5).map(|i| rec(i, 0.2 * i as f64, true, &[Category::Health])).collect();
        let cal = calibrate_categories(&records, 0.8, 14).unwrap();
        let mut policy = ThresholdPolicy::uniform(0.5, 0.6);
        cal.apply_to(&mut policy);
        assert_eq!(policy.categories[&Category::Health], 0.0);
        assert_eq!(policy.categories[&Category::FoodSecurity], 0.6);
    }
}
