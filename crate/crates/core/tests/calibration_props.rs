use std::collections::HashMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use triage_core::calibration::{
    allocate, candidate_thresholds, estimate_pr, operating_table, select_threshold, stratified_sample, Allocation,
    Estimator, OperatingPoint, ScoredItem, SelectionError, SelectionMode,
};
use triage_core::types::Source;

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0), failure_persistence: None, ..Config::default() }
}

/// Scores on a coarse grid so ties are common; `None` marks unlabeled.
fn items() -> impl Strategy<Value = Vec<(u32, Option<bool>, u8)>> {
    prop::collection::vec((0u32..=40, prop::option::weighted(0.8, any::<bool>()), 0u8..3), 1..60)
}

fn to_items(raw: &[(u32, Option<bool>, u8)]) -> Vec<ScoredItem> {
    let sources = [Source::Gdelt, Source::Newsapi, Source::Osac];
    raw.iter()
        .map(|&(s, positive, src)| ScoredItem {
            score: f64::from(s) / 40.0,
            positive,
            weight: 1.0,
            source: sources[src as usize],
        })
        .collect()
}

struct Sweep {
    threshold: f64,
    precision: Option<f64>,
    recall: Option<f64>,
}

/// Direct count at every distinct labeled score plus 0 and 1.
fn sweep(items: &[ScoredItem]) -> Vec<Sweep> {
    let mut ts: Vec<f64> = vec![0.0, 1.0];
    ts.extend(items.iter().filter(|i| i.positive.is_some()).map(|i| i.score));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let positives = items.iter().filter(|i| i.positive == Some(true)).count();
    ts.into_iter()
        .map(|t| {
            let above: Vec<&ScoredItem> = items.iter().filter(|i| i.positive.is_some() && i.score >= t).collect();
            let tp = above.iter().filter(|i| i.positive == Some(true)).count();
            Sweep {
                threshold: t,
                precision: (!above.is_empty()).then(|| tp as f64 / above.len() as f64),
                recall: (positives > 0).then(|| tp as f64 / positives as f64),
            }
        })
        .collect()
}

fn reaches(v: f64, floor: f64) -> bool {
    (v * 100.0).round() / 100.0 >= floor - 1e-9
}

fn brute_min_precision(s: &[Sweep], floor: f64) -> Option<f64> {
    s.iter().find(|p| p.precision.is_some_and(|v| reaches(v, floor))).map(|p| p.threshold)
}

fn brute_max_precision(s: &[Sweep], floor: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in s {
        if let (Some(prec), Some(rec)) = (p.precision, p.recall) {
            if reaches(rec, floor) && best.is_none_or(|(_, b)| prec > b) {
                best = Some((p.threshold, prec));
            }
        }
    }
    best.map(|(t, _)| t)
}

fn table(items: &[ScoredItem]) -> Vec<OperatingPoint> {
    operating_table(items, &candidate_thresholds(items), 14, Estimator::Raw).unwrap().points
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn min_precision_agrees_with_sweep(raw in items(), floor_pct in 0u32..=100) {
        let items = to_items(&raw);
        let floor = f64::from(floor_pct) / 100.0;
        let s = sweep(&items);
        let points = table(&items);
        let got = select_threshold(&points, SelectionMode::MinPrecision(floor));
        match brute_min_precision(&s, floor) {
            Some(t) => {
                let p = got.unwrap();
                prop_assert_eq!(p.threshold, t);
                prop_assert!(reaches(p.precision.unwrap(), floor));
            }
            None => prop_assert!(
                matches!(got, Err(SelectionError::Infeasible { .. })),
                "expected infeasible, got {:?}", got
            ),
        }
    }

    #[test]
    fn max_precision_at_recall_agrees_with_sweep(raw in items(), floor_pct in 0u32..=100) {
        let items = to_items(&raw);
        let floor = f64::from(floor_pct) / 100.0;
        let got = select_threshold(&table(&items), SelectionMode::MaxPrecisionAtMinRecall(floor));
        match brute_max_precision(&sweep(&items), floor) {
            Some(t) => prop_assert_eq!(got.unwrap().threshold, t),
            None => prop_assert!(got.is_err()),
        }
    }

    #[test]
    fn table_matches_sweep_pointwise(raw in items()) {
        let items = to_items(&raw);
        let s = sweep(&items);
        let points = table(&items);
        prop_assert_eq!(points.len(), s.len());
        for (p, q) in points.iter().zip(&s) {
            prop_assert_eq!(p.threshold, q.threshold);
            prop_assert_eq!(p.precision, q.precision);
            prop_assert_eq!(p.recall, q.recall);
        }
    }

    #[test]
    fn volume_and_recall_never_rise_with_threshold(
        raw in items(),
        extra in prop::collection::btree_set(0u32..=1000, 0..20),
        window in 1u32..30,
    ) {
        let items = to_items(&raw);
        let mut thresholds = candidate_thresholds(&items);
        thresholds.extend(extra.iter().map(|&t| f64::from(t) / 1000.0));
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let points = operating_table(&items, &thresholds, window, Estimator::Raw).unwrap().points;
        for w in points.windows(2) {
            prop_assert!(w[1].weekly_volume <= w[0].weekly_volume);
            if let (Some(a), Some(b)) = (w[0].recall, w[1].recall) {
                prop_assert!(b <= a + 1e-12);
            }
            for (src, v) in &w[1].source_volumes {
                prop_assert!(*v <= w[0].source_volumes[src]);
            }
        }
    }
}

/// Largest-remainder proportional split with capping, computed the long way:
/// cap, redistribute, repeat; then hand out the remaining units one at a
/// time to the largest fractional parts.
fn allocation_oracle(pop: &[usize], target: usize) -> Vec<usize> {
    let goal = target.min(pop.iter().sum());
    let mut capped = vec![false; pop.len()];
    loop {
        let fixed: usize = (0..pop.len()).filter(|&h| capped[h]).map(|h| pop[h]).sum();
        let free_pop: usize = (0..pop.len()).filter(|&h| !capped[h]).map(|h| pop[h]).sum();
        let mut newly = false;
        for h in 0..pop.len() {
            if !capped[h] && free_pop > 0 && ((goal - fixed) as f64) * pop[h] as f64 / free_pop as f64 > pop[h] as f64 + 1e-9 {
                capped[h] = true;
                newly = true;
            }
        }
        if !newly {
            let quotas: Vec<f64> = (0..pop.len())
                .map(|h| {
                    if capped[h] {
                        pop[h] as f64
                    } else if free_pop == 0 {
                        0.0
                    } else {
                        (goal - fixed) as f64 * pop[h] as f64 / free_pop as f64
                    }
                })
                .collect();
            let mut out: Vec<usize> = quotas.iter().zip(pop).map(|(q, &n)| (q.floor() as usize).min(n)).collect();
            while out.iter().sum::<usize>() < goal {
                let h = (0..pop.len())
                    .filter(|&h| out[h] < pop[h])
                    .max_by(|&a, &b| {
                        let fa = quotas[a] - out[a] as f64;
                        let fb = quotas[b] - out[b] as f64;
                        fa.total_cmp(&fb).then(b.cmp(&a))
                    })
                    .unwrap();
                out[h] += 1;
            }
            return out;
        }
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn allocation_matches_oracle(pop in prop::collection::vec(0usize..200, 2..12), target in 1usize..1500) {
        let got = allocate(&pop, target, Allocation::Proportional);
        prop_assert_eq!(got.iter().sum::<usize>(), target.min(pop.iter().sum()));
        for (n, cap) in got.iter().zip(&pop) {
            prop_assert!(n <= cap);
        }
        prop_assert_eq!(got, allocation_oracle(&pop, target));
    }

    #[test]
    fn equal_allocation_respects_caps(pop in prop::collection::vec(0usize..200, 2..12), target in 1usize..1500) {
        let got = allocate(&pop, target, Allocation::Equal);
        prop_assert_eq!(got.iter().sum::<usize>(), target.min(pop.iter().sum()));
        for (n, cap) in got.iter().zip(&pop) {
            prop_assert!(n <= cap);
        }
    }
}

proptest! {
    #![proptest_config(config(128))]

    /// Two strata of very different positive rates, sampled at 95% overall.
    /// The weighted estimate stays within 0.02 of the population precision.
    #[test]
    fn stratified_estimate_tracks_population(
        n_low in 1000usize..3000,
        n_high in 1000usize..3000,
        rate_low in 0.0f64..0.4,
        rate_high in 0.5f64..1.0,
        t_step in 1u32..19,
        seed in any::<u64>(),
    ) {
        let threshold = f64::from(t_step) / 20.0;
        let mut scores = Vec::new();
        let mut labels = HashMap::new();
        let mut score_of = HashMap::new();
        // deterministic layout: scores spread evenly inside each half,
        // positives spread evenly among them
        for (prefix, n, rate, base) in [("l", n_low, rate_low, 0.0), ("h", n_high, rate_high, 0.5)] {
            let positives = (rate * n as f64).round() as usize;
            for i in 0..n {
                let id = format!("{prefix}{i}");
                let s = base + 0.5 * (i as f64 + 0.5) / n as f64;
                let positive = (i * positives) / n != ((i + 1) * positives) / n;
                scores.push((id.clone(), s));
                labels.insert(id.clone(), positive);
                score_of.insert(id, s);
            }
        }
        let truth = {
            let above: Vec<&String> = score_of.iter().filter(|(_, &s)| s >= threshold).map(|(id, _)| id).collect();
            let tp = above.iter().filter(|id| labels[**id]).count();
            (!above.is_empty()).then(|| tp as f64 / above.len() as f64)
        };
        let target = ((n_low + n_high) as f64 * 0.95) as usize;
        let sample = stratified_sample(&scores, 2, target, seed).unwrap();
        prop_assert_eq!(sample.size(), target);
        let est = estimate_pr(&sample, &labels, &score_of, threshold).unwrap();
        match (truth, est.precision) {
            (Some(t), Some(e)) => prop_assert!((t - e).abs() <= 0.02, "truth {} estimate {}", t, e),
            (t, e) => prop_assert_eq!(t.is_some(), e.is_some()),
        }
    }

    #[test]
    fn full_single_stratum_equals_exact_counts(
        raw in prop::collection::vec((0u32..=100, any::<bool>()), 1..80),
        t in 0u32..=100,
    ) {
        let threshold = f64::from(t) / 100.0;
        let scores: Vec<(String, f64)> =
            raw.iter().enumerate().map(|(i, &(s, _))| (format!("a{i}"), f64::from(s) / 100.0)).collect();
        let labels: HashMap<String, bool> = raw.iter().enumerate().map(|(i, &(_, y))| (format!("a{i}"), y)).collect();
        let score_of: HashMap<String, f64> = scores.iter().cloned().collect();
        // two bins but everything sampled: weights are all 1
        let sample = stratified_sample(&scores, 2, raw.len(), 1).unwrap();
        let est = estimate_pr(&sample, &labels, &score_of, threshold).unwrap();
        let pp = scores.iter().filter(|(_, s)| *s >= threshold).count();
        let tp = scores.iter().filter(|(id, s)| *s >= threshold && labels[id]).count();
        let pos = labels.values().filter(|y| **y).count();
        prop_assert_eq!(est.precision, (pp > 0).then(|| tp as f64 / pp as f64));
        prop_assert_eq!(est.recall, (pos > 0).then(|| tp as f64 / pos as f64));
    }
}
