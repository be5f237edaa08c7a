use triage_core::calibration::{relevance_table, select_threshold, Estimator, OperatingPoint, SelectionMode};
use triage_core::synth::{arabic_staging, english_staging, french_staging};
use triage_core::types::{Language, Source};

const WINDOW_DAYS: u32 = 14;

fn point_at(points: &[OperatingPoint], t: f64) -> &OperatingPoint {
    points.iter().find(|p| (p.threshold - t).abs() < 1e-9).unwrap_or_else(|| panic!("no point at {t}"))
}

fn close(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() <= 0.01)
}

fn check_rows(points: &[OperatingPoint], rows: &[(f64, f64, f64, u64)]) {
    for &(t, recall, precision, volume) in rows {
        let p = point_at(points, t);
        assert!(close(p.recall, recall), "recall at {t}: {:?}", p.recall);
        assert!(close(p.precision, precision), "precision at {t}: {:?}", p.precision);
        assert_eq!(p.weekly_volume, volume, "volume at {t}");
    }
}

#[test]
fn english_options() {
    let recs = english_staging(0);
    let table = relevance_table(&recs, Some(Language::En), None, WINDOW_DAYS, Estimator::Raw).unwrap();
    check_rows(
        &table.points,
        &[(0.184, 0.85, 0.785, 951), (0.646, 0.790, 0.802, 803), (0.943, 0.532, 0.854, 484), (0.951, 0.405, 0.903, 367)],
    );
    let sources = [
        (0.184, [80, 21, 850]),
        (0.646, [67, 16, 720]),
        (0.943, [36, 8, 440]),
        (0.951, [22, 5, 340]),
    ];
    for (t, [newsapi, osac, gdelt]) in sources {
        let v = &point_at(&table.points, t).source_volumes;
        assert_eq!((v[&Source::Newsapi], v[&Source::Osac], v[&Source::Gdelt]), (newsapi, osac, gdelt), "sources at {t}");
    }

    let strict = select_threshold(&table.points, SelectionMode::MinPrecision(0.90)).unwrap();
    assert_eq!(strict.threshold, 0.951);
    assert!(close(strict.precision, 0.903) && close(strict.recall, 0.405));
    let broad = select_threshold(&table.points, SelectionMode::MaxPrecisionAtMinRecall(0.85)).unwrap();
    assert_eq!(broad.threshold, 0.184);
}

#[test]
fn french_options() {
    let recs = french_staging(0);
    let table = relevance_table(&recs, Some(Language::Fr), None, WINDOW_DAYS, Estimator::Raw).unwrap();
    check_rows(&table.points, &[(0.125, 0.676, 0.50, 63), (0.881, 0.432, 0.615, 39), (0.942, 0.324, 0.706, 26)]);
    let chosen = select_threshold(&table.points, SelectionMode::MinPrecision(0.62)).unwrap();
    assert_eq!(chosen.threshold, 0.881);
    assert!((chosen.precision.unwrap() - 0.615).abs() < 5e-4);
}

#[test]
fn arabic_options() {
    let recs = arabic_staging(0);
    let table = relevance_table(&recs, Some(Language::Ar), None, WINDOW_DAYS, Estimator::Raw).unwrap();
    check_rows(&table.points, &[(0.361, 0.793, 0.605, 230), (0.824, 0.690, 0.714, 211), (0.952, 0.414, 0.8, 150)]);
    let chosen = select_threshold(&table.points, SelectionMode::MinPrecision(0.80)).unwrap();
    assert_eq!(chosen.threshold, 0.952);
    assert!((chosen.precision.unwrap() - 0.8).abs() < 1e-9);
}

#[test]
fn other_seeds_keep_the_tables() {
    for seed in [1, 7, 42] {
        let recs = english_staging(seed);
        let table = relevance_table(&recs, Some(Language::En), None, WINDOW_DAYS, Estimator::Raw).unwrap();
        let chosen = select_threshold(&table.points, SelectionMode::MinPrecision(0.90)).unwrap();
        assert_eq!((chosen.threshold, chosen.weekly_volume), (0.951, 367));
    }
}
