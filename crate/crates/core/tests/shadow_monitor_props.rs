use std::collections::{BTreeSet, HashMap};

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use triage_core::calibration::ThresholdPolicy;
use triage_core::classifier::RecordedScorer;
use triage_core::monitor::{
    audit_missing_labels, bucket_metrics, detect_drift, DriftRule, MetricsBucket, Month, ReviewedItem,
};
use triage_core::shadow::{
    comparison_report, evaluate_categories, shadow_run, CategoryObservation, CellValue, PipelineConfig,
};
use triage_core::types::{Article, Category, Language, Prediction, ReviewDecision, Source};

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0), failure_persistence: None, ..Config::default() }
}

const LANGS: [Language; 3] = [Language::En, Language::Fr, Language::Ar];

fn category_set() -> impl Strategy<Value = BTreeSet<Category>> {
    prop::collection::btree_set(prop::sample::select(Category::ALL.to_vec()), 0..=5)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn f1_matches_confusion_oracle(
        obs in prop::collection::vec((0usize..3, category_set(), category_set()), 0..30),
    ) {
        let observations: Vec<CategoryObservation> = obs
            .iter()
            .map(|(l, p, a)| CategoryObservation { language: LANGS[*l], predicted: p.clone(), actual: a.clone() })
            .collect();
        let eval = evaluate_categories(&observations);
        for c in Category::ALL {
            for lang in LANGS {
                let rows: Vec<&CategoryObservation> = observations.iter().filter(|o| o.language == lang).collect();
                if rows.is_empty() {
                    prop_assert_eq!(eval.get(c, lang), None);
                    continue;
                }
                let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
                for o in &rows {
                    match (o.predicted.contains(&c), o.actual.contains(&c)) {
                        (true, true) => tp += 1.0,
                        (true, false) => fp += 1.0,
                        (false, true) => fn_ += 1.0,
                        _ => {}
                    }
                }
                let expected = if tp + fn_ == 0.0 {
                    CellValue::NoLabels
                } else {
                    let precision: f64 = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                    let recall = tp / (tp + fn_);
                    CellValue::F1(if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 })
                };
                match (eval.get(c, lang).unwrap(), expected) {
                    (CellValue::F1(a), CellValue::F1(b)) => prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }
}

/// Precision on a 1/1000 grid, so shifted means stay far from the alert
/// boundary compared to rounding error.
fn series() -> impl Strategy<Value = Vec<(usize, u32, u64, u32)>> {
    prop::collection::vec((0usize..3, 0u32..6, 0u64..40, 100u32..=900), 0..30)
}

fn buckets_from(raw: &[(usize, u32, u64, u32)], shift: i32) -> Vec<MetricsBucket> {
    let mut seen = BTreeSet::new();
    raw.iter()
        .filter(|(l, m, _, _)| seen.insert((*l, *m)))
        .map(|&(l, m, reviewed, p)| MetricsBucket {
            period: Month { year: 2024, month: m + 1 },
            language: LANGS[l],
            reviewed,
            confirmed: 0,
            precision: Some(f64::from(p as i32 + shift) / 1000.0),
        })
        .collect()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn drift_alerts_are_shift_invariant(
        raw in series(),
        shift in -90i32..=90,
        delta in 1u32..20,
        min_history in 1usize..4,
    ) {
        let rule = DriftRule { delta: f64::from(delta) / 100.0, min_history, min_support: 10 };
        let alerts = |b: &[MetricsBucket]| -> Vec<(Language, Month)> {
            detect_drift(b, rule).alerts.iter().map(|a| (a.language, a.period)).collect()
        };
        prop_assert_eq!(alerts(&buckets_from(&raw, 0)), alerts(&buckets_from(&raw, shift)));
    }

    #[test]
    fn alerts_only_with_support(raw in series()) {
        let buckets = buckets_from(&raw, 0);
        for a in detect_drift(&buckets, DriftRule::default()).alerts {
            let b = buckets.iter().find(|b| b.language == a.language && b.period == a.period).unwrap();
            prop_assert!(b.reviewed >= 10);
        }
    }

    #[test]
    fn buckets_partition_confirmed(
        items in prop::collection::vec((0usize..3, 0i64..200, 0u32..=100, any::<bool>()), 0..80),
        t in 0u32..=100,
    ) {
        let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let reviewed: Vec<ReviewedItem> = items
            .iter()
            .enumerate()
            .map(|(i, &(l, day, s, y))| ReviewedItem {
                article_id: format!("a{i}"),
                language: LANGS[l],
                decided_at: start + Duration::days(day),
                relevance_score: f64::from(s) / 100.0,
                relevant: y,
            })
            .collect();
        let threshold = f64::from(t) / 100.0;
        let policy = ThresholdPolicy::uniform(threshold, 0.5);
        let buckets = bucket_metrics(&reviewed, &policy);
        let in_scope: Vec<&ReviewedItem> = reviewed.iter().filter(|r| r.relevance_score >= threshold).collect();
        prop_assert_eq!(buckets.iter().map(|b| b.confirmed).sum::<u64>(), in_scope.iter().filter(|r| r.relevant).count() as u64);
        prop_assert_eq!(buckets.iter().map(|b| b.reviewed).sum::<u64>(), in_scope.len() as u64);
        let keys: BTreeSet<_> = buckets.iter().map(|b| (b.period, b.language)).collect();
        prop_assert_eq!(keys.len(), buckets.len());
        for b in &buckets {
            prop_assert!(b.confirmed <= b.reviewed);
        }
    }

    #[test]
    fn audit_never_lists_labeled_articles(
        rows in prop::collection::vec((0u32..=100, any::<bool>(), category_set()), 0..40),
        cat in 0usize..5,
        t in 0u32..=100,
    ) {
        let c = Category::ALL[cat];
        let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let mut preds = Vec::new();
        let mut decisions = HashMap::new();
        for (i, (score, relevant, cats)) in rows.iter().enumerate() {
            let id = format!("a{i}");
            let mut scores = [0.0; 5];
            scores[cat] = f64::from(*score) / 100.0;
            preds.push(Prediction {
                article_id: id.clone(),
                artifact_id: "m".into(),
                relevance_score: 0.5,
                category_scores: scores,
                scored_at: at,
            });
            let categories = if *relevant { cats.clone() } else { BTreeSet::new() };
            decisions.insert(id.clone(), ReviewDecision {
                article_id: id,
                annotator_id: "r".into(),
                relevant: *relevant,
                categories,
                decided_at: at,
            });
        }
        let entries = audit_missing_labels(&preds, &decisions, c, f64::from(t) / 100.0).unwrap();
        for e in &entries {
            prop_assert!(!decisions[&e.article_id].categories.contains(&c));
        }
        for w in entries.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }
}

fn stream() -> impl Strategy<Value = Vec<(usize, usize, u32, u32, Option<bool>)>> {
    // (language, source, baseline score, candidate score, review)
    prop::collection::vec((0usize..3, 0usize..3, 0u32..=100, 0u32..=100, prop::option::of(any::<bool>())), 0..120)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn shadow_sides_are_independent_and_consistent(
        rows in stream(),
        thresholds in [20u32..90, 20u32..90, 20u32..90],
        perturb in 0u32..=100,
    ) {
        let sources = [Source::Gdelt, Source::Newsapi, Source::Osac];
        let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let mut articles = Vec::new();
        let (mut base, mut cand, mut cand2) = (Vec::new(), Vec::new(), Vec::new());
        let mut decisions = HashMap::new();
        let pred = |id: &str, artifact: &str, s: u32| Prediction {
            article_id: id.into(),
            artifact_id: artifact.into(),
            relevance_score: f64::from(s) / 100.0,
            category_scores: [0.0; 5],
            scored_at: at,
        };
        for (i, &(l, s, b, c, review)) in rows.iter().enumerate() {
            let id = format!("a{i}");
            articles.push(Article {
                id: id.clone(),
                source: sources[s],
                url: format!("https://example.org/{i}"),
                language: LANGS[l],
                title: format!("t{i}"),
                body: String::new(),
                published_at: at,
                fetched_at: at,
            });
            base.push(pred(&id, "b", b));
            cand.push(pred(&id, "c", c));
            cand2.push(pred(&id, "c", (c + perturb) % 101));
            if let Some(relevant) = review {
                decisions.insert(id.clone(), ReviewDecision {
                    article_id: id,
                    annotator_id: "r".into(),
                    relevant,
                    categories: BTreeSet::new(),
                    decided_at: at,
                });
            }
        }
        let mut policy = ThresholdPolicy::uniform(0.5, 0.5);
        for (l, t) in LANGS.iter().zip(thresholds) {
            policy.relevance.insert(*l, f64::from(t) / 100.0);
        }
        let b_scorer = RecordedScorer::new("b", base);
        let c_scorer = RecordedScorer::new("c", cand);
        let c2_scorer = RecordedScorer::new("c", cand2);
        let baseline = PipelineConfig {
            label: "baseline".into(),
            scorer: &b_scorer,
            policy: policy.clone(),
            sources: BTreeSet::from([Source::Newsapi, Source::Osac]),
        };
        let side = |scorer| PipelineConfig {
            label: "candidate".into(),
            scorer,
            policy: policy.clone(),
            sources: sources.iter().copied().collect(),
        };
        let one = shadow_run(&articles, &decisions, &baseline, &side(&c_scorer), 7.0);
        let two = shadow_run(&articles, &decisions, &baseline, &side(&c2_scorer), 7.0);
        // the candidate never influences baseline counts
        prop_assert_eq!(&one.baseline, &two.baseline);
        for counts in [&one.baseline, &one.candidate, &two.candidate] {
            prop_assert!(counts.validate().is_ok(), "{:?}", counts.validate());
            prop_assert_eq!(counts.predicted_by_language.values().sum::<u64>(), counts.predicted);
            prop_assert!(counts.confirmed <= counts.reviewed && counts.reviewed <= counts.predicted && counts.predicted <= counts.crawled);
        }
        prop_assert_eq!(one.candidate.crawled, rows.len() as u64);
        if one.baseline.crawled > 0 {
            let a = comparison_report(&one.baseline, &one.candidate).unwrap().render();
            let b = comparison_report(&one.baseline, &one.candidate).unwrap().render();
            prop_assert_eq!(a, b);
        }
    }
}
