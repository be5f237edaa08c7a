//! Deterministic synthetic data: labeled training corpora, staging samples,
//! a week-long article stream with recorded scores and reviews, drift
//! streams and multi-source replay files.
//!
//! Everything is a pure function of the seed. The committed files under
//! `fixtures/` are produced by [`fixture_files`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration::{SampleLabel, StagingRecord, ThresholdPolicy};
use crate::shadow::{CategoryEval, CellValue, StageCounts};
use crate::store::{ARTICLES, DECISIONS, PREDICTIONS};
use crate::types::{round_to, Article, Category, Language, Prediction, ReviewDecision, Source};

pub const DEFAULT_SEED: u64 = 0;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 4, 0, 0, 0).unwrap()
}

struct Lexicon {
    violence: &'static [&'static str],
    categories: [&'static [&'static str]; 5],
    neutral: &'static [&'static str],
    filler: &'static [&'static str],
    places: &'static [&'static str],
}

const EN: Lexicon = Lexicon {
    violence: &[
        "attack", "killed", "gunmen", "armed", "clashes", "shelling", "explosion", "wounded", "abducted", "raid",
        "airstrike", "militants", "looted", "ambush",
    ],
    categories: [
        &["market", "crops", "grain", "food", "harvest", "warehouse"],
        &["aid", "humanitarian", "convoy", "ngo", "relief", "workers"],
        &["school", "students", "teacher", "university", "classroom", "pupils"],
        &["hospital", "clinic", "doctors", "ambulance", "nurses", "medical"],
        &["civilians", "displaced", "women", "children", "refugees", "camp"],
    ],
    neutral: &[
        "football", "election", "economy", "concert", "weather", "stocks", "festival", "technology", "parliament",
        "tourism", "budget", "trade", "championship", "film", "startup", "exports",
    ],
    filler: &["the", "in", "on", "after", "near", "said", "officials", "local", "reports", "on", "sunday", "week"],
    places: &["kivu", "tigray", "darfur", "aleppo", "sahel", "borno", "idlib", "kharkiv", "mopti", "cabo"],
};

const FR: Lexicon = Lexicon {
    violence: &[
        "attaque", "tués", "assaillants", "armés", "affrontements", "bombardement", "explosion", "blessés",
        "enlevés", "raid", "frappe", "jihadistes", "pillage", "embuscade",
    ],
    categories: [
        &["marché", "récoltes", "céréales", "vivres", "moisson", "entrepôt"],
        &["aide", "humanitaire", "convoi", "ong", "secours", "travailleurs"],
        &["école", "élèves", "enseignant", "université", "classe", "étudiants"],
        &["hôpital", "clinique", "médecins", "ambulance", "infirmiers", "santé"],
        &["civils", "déplacés", "femmes", "enfants", "réfugiés", "camp"],
    ],
    neutral: &[
        "football", "élection", "économie", "concert", "météo", "bourse", "festival", "technologie", "parlement",
        "tourisme", "budget", "commerce", "championnat", "cinéma", "entreprise", "exportations",
    ],
    filler: &["le", "la", "dans", "après", "près", "selon", "les", "autorités", "locales", "dimanche", "semaine"],
    places: &["kivu", "sahel", "mopti", "gao", "ménaka", "bangui", "diffa", "tillabéri", "ituri", "kidal"],
};

const AR: Lexicon = Lexicon {
    violence: &[
        "هجوم", "قتلى", "مسلحون", "اشتباكات", "قصف", "انفجار", "جرحى", "اختطاف", "غارة", "مداهمة", "كمين", "نهب",
    ],
    categories: [
        &["سوق", "محاصيل", "حبوب", "غذاء", "حصاد", "مستودع"],
        &["مساعدات", "إنسانية", "قافلة", "منظمة", "إغاثة", "عمال"],
        &["مدرسة", "طلاب", "معلم", "جامعة", "فصل", "تلاميذ"],
        &["مستشفى", "عيادة", "أطباء", "إسعاف", "ممرضين", "طبي"],
        &["مدنيين", "نازحين", "نساء", "أطفال", "لاجئين", "مخيم"],
    ],
    neutral: &[
        "كرة", "انتخابات", "اقتصاد", "حفل", "طقس", "أسهم", "مهرجان", "تكنولوجيا", "برلمان", "سياحة", "ميزانية",
        "تجارة", "بطولة", "فيلم", "شركة", "صادرات",
    ],
    filler: &["في", "على", "بعد", "قرب", "قال", "مسؤولون", "محليون", "تقارير", "الأحد", "الأسبوع"],
    places: &["حلب", "إدلب", "دارفور", "صنعاء", "تعز", "الحديدة", "درعا", "الموصل", "بنغازي", "مأرب"],
};

fn lexicon(language: Language) -> &'static Lexicon {
    match language {
        Language::Fr => &FR,
        Language::Ar => &AR,
        Language::En | Language::Other => &EN,
    }
}

fn pick<'a>(r: &mut ChaCha8Rng, words: &'a [&'a str]) -> &'a str {
    words.choose(r).expect("non-empty word list")
}

/// Title and body for a synthetic article. `serial` keeps texts unique.
pub fn article_text(
    r: &mut ChaCha8Rng,
    language: Language,
    relevant: bool,
    categories: &BTreeSet<Category>,
    serial: usize,
) -> (String, String) {
    let lx = lexicon(language);
    let place = pick(r, lx.places);
    let mut title = Vec::new();
    let mut body = Vec::new();
    if relevant {
        title.push(pick(r, lx.violence));
        title.push(place);
        for _ in 0..r.random_range(2..5) {
            body.push(pick(r, lx.violence));
        }
        for c in categories {
            let words = lx.categories[c.index()];
            title.push(pick(r, words));
            for _ in 0..r.random_range(2..4) {
                body.push(pick(r, words));
            }
        }
        if r.random_bool(0.3) {
            body.push(pick(r, lx.neutral));
        }
    } else {
        title.push(pick(r, lx.neutral));
        title.push(place);
        for _ in 0..r.random_range(3..6) {
            body.push(pick(r, lx.neutral));
        }
        if r.random_bool(0.35) {
            let c = Category::ALL.choose(r).expect("categories");
            body.push(pick(r, lx.categories[c.index()]));
        }
        if r.random_bool(0.12) {
            body.push(pick(r, lx.violence));
        }
    }
    for _ in 0..r.random_range(4..9) {
        body.push(pick(r, lx.filler));
    }
    body.shuffle(r);
    body.push(place);
    let tag = format!("n{serial}");
    body.push(&tag);
    (title.join(" "), body.join(" "))
}

fn random_categories(r: &mut ChaCha8Rng, allow_food: bool) -> BTreeSet<Category> {
    let pool: &[Category] = if allow_food {
        &Category::ALL
    } else {
        &[Category::AidSecurity, Category::Education, Category::Health, Category::Protection]
    };
    let n = if r.random_bool(0.3) { 2 } else { 1 };
    pool.choose_multiple(r, n).copied().collect()
}

fn make_article(id: String, source: Source, language: Language, title: String, body: String, at: DateTime<Utc>) -> Article {
    Article {
        url: format!("https://{}.example.org/{}/{}", source.as_str(), language, id),
        id,
        source,
        language,
        title,
        body,
        published_at: at - Duration::minutes(30),
        fetched_at: at,
    }
}

fn decision(article_id: &str, relevant: bool, categories: BTreeSet<Category>, at: DateTime<Utc>) -> ReviewDecision {
    ReviewDecision {
        article_id: article_id.to_owned(),
        annotator_id: "analyst-1".to_owned(),
        relevant,
        categories: if relevant { categories } else { BTreeSet::new() },
        decided_at: at,
    }
}

/// Articles with consensus decisions for training, spread over 120 days.
/// About 40% are relevant; 4% of labels are flipped.
pub fn labeled_corpus(seed: u64, counts: &[(Language, usize)]) -> Vec<(Article, ReviewDecision)> {
    let mut r = rng(seed, 1);
    let mut out = Vec::new();
    let mut serial = 0;
    for &(language, n) in counts {
        for i in 0..n {
            serial += 1;
            let relevant = r.random_bool(0.4);
            let cats = if relevant { random_categories(&mut r, true) } else { BTreeSet::new() };
            let (title, body) = article_text(&mut r, language, relevant, &cats, serial);
            let at = epoch() - Duration::days(120) + Duration::minutes(r.random_range(0..120 * 24 * 60));
            let id = format!("corpus-{language}-{i:05}");
            let article = make_article(id.clone(), Source::Gdelt, language, title, body, at);
            let label = if r.random_bool(0.04) { !relevant } else { relevant };
            let cats = if label && cats.is_empty() { random_categories(&mut r, true) } else { cats };
            out.push((article, decision(&id, label, cats, at + Duration::hours(6))));
        }
    }
    out.sort_by(|a, b| a.0.fetched_at.cmp(&b.0.fetched_at).then_with(|| a.0.id.cmp(&b.0.id)));
    out
}

/// A score band of a staging sample. Labeled items are listed from the
/// highest score down; the last one sits exactly on `lo`.
struct Segment {
    lo: f64,
    hi: f64,
    labels: Vec<bool>,
    /// Leading labeled items sharing one score.
    tie_top: usize,
    /// Trailing labeled items sharing the score `lo`.
    tie_bottom: usize,
    /// Total records in the band per source, labeled ones included
    /// (labeled records are GDELT).
    population: Vec<(Source, usize)>,
}

/// `neg` negatives spread evenly through `pos` positives, starting with a
/// negative and ending with a positive.
fn spread(pos: usize, neg: usize) -> Vec<bool> {
    let n = pos + neg;
    let neg_at: BTreeSet<usize> = (0..neg).map(|i| i * n / neg).collect();
    (0..n).map(|i| !neg_at.contains(&i)).collect()
}

fn block(neg: usize, pos: usize) -> Vec<bool> {
    std::iter::repeat_n(false, neg).chain(std::iter::repeat_n(true, pos)).collect()
}

/// Repeated runs of four negatives and one positive, then leftover negatives.
fn chunked(pos: usize, neg: usize) -> Vec<bool> {
    let mut out = Vec::new();
    let mut left = neg;
    for _ in 0..pos {
        let k = left.min(4);
        out.extend(std::iter::repeat_n(false, k));
        left -= k;
        out.push(true);
    }
    out.extend(std::iter::repeat_n(false, left));
    out
}

fn staging(seed: u64, stream: u64, language: Language, segments: &[Segment]) -> Vec<StagingRecord> {
    let mut r = rng(seed, stream);
    let mut records = Vec::new();
    let mut next_id = 0usize;
    let mut id = |r: &mut ChaCha8Rng| {
        next_id += 1;
        let _ = r;
        format!("{language}-stg-{next_id:05}")
    };
    for seg in segments {
        let k = seg.labels.len();
        let groups = k - seg.tie_top.saturating_sub(1) - seg.tie_bottom.saturating_sub(1);
        for (i, &positive) in seg.labels.iter().enumerate() {
            let group = if i < seg.tie_top {
                0
            } else if i >= k - seg.tie_bottom {
                groups - 1
            } else {
                i - seg.tie_top.saturating_sub(1)
            };
            let score = if group == groups - 1 {
                seg.lo
            } else {
                round_to(seg.hi - (seg.hi - seg.lo) * (group + 1) as f64 / groups as f64, 6)
            };
            let categories = if positive { random_categories(&mut r, false) } else { BTreeSet::new() };
            let scores = Category::ALL
                .iter()
                .map(|c| {
                    let s = if categories.contains(c) { r.random_range(0.6..1.0) } else { r.random_range(0.0..0.7) };
                    (*c, round_to(s, 4))
                })
                .collect();
            records.push(StagingRecord {
                article_id: id(&mut r),
                language,
                source: Source::Gdelt,
                relevance: score,
                categories: scores,
                label: Some(SampleLabel { relevant: positive, categories }),
                weight: 1.0,
            });
        }
        for &(source, total) in &seg.population {
            let unlabeled = if source == Source::Gdelt { total - k } else { total };
            for _ in 0..unlabeled {
                let score = round_to(r.random_range(seg.lo..seg.hi), 6).min(seg.hi - 1e-6).max(seg.lo);
                records.push(StagingRecord {
                    article_id: id(&mut r),
                    language,
                    source,
                    relevance: score,
                    categories: BTreeMap::new(),
                    label: None,
                    weight: 1.0,
                });
            }
        }
    }
    records.shuffle(&mut r);
    records
}

/// Fourteen-day English staging window: 1,000 labeled GDELT records plus
/// unlabeled traffic from three sources.
pub fn english_staging(seed: u64) -> Vec<StagingRecord> {
    use Source::{Gdelt, Newsapi, Osac};
    let mut b = vec![false; 5];
    b.extend(block(20, 67));
    let mut d = block(20, 27);
    d.extend([true; 5]);
    let segments = [
        Segment { lo: 0.951, hi: 1.0, labels: spread(214, 23), tie_top: 0, tie_bottom: 0, population: vec![(Newsapi, 44), (Osac, 10), (Gdelt, 680)] },
        Segment { lo: 0.943, hi: 0.951, labels: b, tie_top: 5, tie_bottom: 0, population: vec![(Newsapi, 28), (Osac, 6), (Gdelt, 200)] },
        Segment { lo: 0.646, hi: 0.943, labels: block(55, 136), tie_top: 0, tie_bottom: 0, population: vec![(Newsapi, 62), (Osac, 16), (Gdelt, 560)] },
        Segment { lo: 0.184, hi: 0.646, labels: d, tie_top: 0, tie_bottom: 5, population: vec![(Newsapi, 26), (Osac, 10), (Gdelt, 260)] },
        Segment { lo: 0.0, hi: 0.184, labels: chunked(79, 349), tie_top: 0, tie_bottom: 0, population: vec![(Newsapi, 140), (Osac, 40), (Gdelt, 3000)] },
    ];
    staging(seed, 10, Language::En, &segments)
}

/// French staging window, GDELT only.
pub fn french_staging(seed: u64) -> Vec<StagingRecord> {
    let segments = [
        Segment { lo: 0.942, hi: 1.0, labels: spread(12, 5), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 52)] },
        Segment { lo: 0.881, hi: 0.942, labels: block(5, 4), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 26)] },
        Segment { lo: 0.125, hi: 0.881, labels: block(15, 9), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 48)] },
        Segment { lo: 0.0, hi: 0.125, labels: block(40, 12), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 150)] },
    ];
    staging(seed, 11, Language::Fr, &segments)
}

/// Arabic staging window, GDELT only.
pub fn arabic_staging(seed: u64) -> Vec<StagingRecord> {
    let segments = [
        Segment { lo: 0.952, hi: 1.0, labels: spread(12, 3), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 300)] },
        Segment { lo: 0.824, hi: 0.952, labels: block(5, 8), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 122)] },
        Segment { lo: 0.361, hi: 0.824, labels: block(7, 3), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 38)] },
        Segment { lo: 0.0, hi: 0.361, labels: block(30, 6), tie_top: 0, tie_bottom: 0, population: vec![(Source::Gdelt, 200)] },
    ];
    staging(seed, 12, Language::Ar, &segments)
}

/// Weekly stage counts before and after the deployment, as published.
pub fn deployment_counts() -> (StageCounts, StageCounts) {
    use Language::{Ar, En, Fr};
    let baseline = StageCounts {
        period_days: 7.0,
        crawled: 450,
        predicted: 54,
        predicted_by_language: BTreeMap::from([(En, 54), (Fr, 0), (Ar, 0)]),
        reviewed: 54,
        reviewed_by_language: BTreeMap::from([(En, 54), (Fr, 0), (Ar, 0)]),
        confirmed: 43,
        confirmed_by_language: BTreeMap::from([(En, 43), (Fr, 0), (Ar, 0)]),
    };
    let deployment = StageCounts {
        period_days: 7.0,
        crawled: 10_550,
        predicted: 496,
        predicted_by_language: BTreeMap::from([(En, 326), (Fr, 41), (Ar, 129)]),
        reviewed: 171,
        reviewed_by_language: BTreeMap::from([(En, 142), (Fr, 11), (Ar, 17)]),
        confirmed: 154,
        confirmed_by_language: BTreeMap::from([(En, 131), (Fr, 9), (Ar, 14)]),
    };
    (baseline, deployment)
}

/// Published per-category F1: offline test set and live reviewed data.
pub fn category_f1_tables() -> (CategoryEval, CategoryEval) {
    use Category::*;
    use Language::{Ar, En, Fr};
    let rows: [(Category, [f64; 3], [Option<f64>; 3]); 5] = [
        (FoodSecurity, [0.679, 0.491, 0.661], [Some(0.014), None, None]),
        (AidSecurity, [0.729, 0.745, 0.688], [Some(0.672), Some(0.947), Some(0.362)]),
        (Education, [0.773, 0.563, 0.571], [Some(0.669), Some(0.671), Some(0.772)]),
        (Health, [0.681, 0.792, 0.629], [Some(0.758), Some(0.680), Some(0.664)]),
        (Protection, [0.708, 0.775, 0.888], [Some(0.908), Some(0.655), Some(0.764)]),
    ];
    let mut offline = CategoryEval::default();
    let mut live = CategoryEval::default();
    for (c, off, on) in rows {
        for (i, lang) in [En, Fr, Ar].into_iter().enumerate() {
            offline.insert(c, lang, CellValue::F1(off[i]));
            live.insert(c, lang, on[i].map_or(CellValue::NoLabels, CellValue::F1));
        }
    }
    (offline, live)
}

/// A week of traffic scored by a baseline and a candidate pipeline.
#[derive(Debug, Clone)]
pub struct WeekFixture {
    pub articles: Vec<Article>,
    /// Scores from the baseline; NewsAPI and OSAC articles only.
    pub baseline: Vec<Prediction>,
    pub candidate: Vec<Prediction>,
    pub decisions: Vec<ReviewDecision>,
    pub baseline_policy: ThresholdPolicy,
    pub candidate_policy: ThresholdPolicy,
}

pub const BASELINE_ARTIFACT: &str = "baseline-recorded";
pub const CANDIDATE_ARTIFACT: &str = "candidate-recorded";

fn candidate_policy() -> ThresholdPolicy {
    let mut p = ThresholdPolicy::uniform(0.5, 0.8);
    p.relevance = BTreeMap::from([(Language::En, 0.951), (Language::Fr, 0.881), (Language::Ar, 0.952)]);
    p.provenance.option = "staging selection".into();
    p
}

fn prediction(r: &mut ChaCha8Rng, article_id: &str, artifact: &str, score: f64, at: DateTime<Utc>) -> Prediction {
    Prediction {
        article_id: article_id.to_owned(),
        artifact_id: artifact.to_owned(),
        relevance_score: round_to(score, 6),
        category_scores: [(); 5].map(|_| round_to(r.random_range(0.0..1.0), 4)),
        scored_at: at,
    }
}

/// 10,550 articles over seven days: 450 from NewsAPI and OSAC, the rest
/// from GDELT in three languages. Recorded scores and reviews are laid
/// out so a shadow run reproduces weekly stage counts of 450 vs 10,550
/// crawled, 54 vs 496 predicted relevant and 43/54 vs 154/170 confirmed.
pub fn week_fixture(seed: u64) -> WeekFixture {
    use Language::{Ar, En, Fr};
    let mut r = rng(seed, 20);
    let cand = candidate_policy();
    let base = ThresholdPolicy::uniform(0.5, 0.8);

    // (source, language, count)
    let plan = [(Source::Newsapi, En, 300), (Source::Osac, En, 150), (Source::Gdelt, En, 5100), (Source::Gdelt, Fr, 1500), (Source::Gdelt, Ar, 3500)];
    let mut slots: Vec<(Source, Language)> = plan.iter().flat_map(|&(s, l, n)| std::iter::repeat_n((s, l), n)).collect();
    slots.shuffle(&mut r);

    let legacy: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].0 != Source::Gdelt).collect();
    let pick_n = |r: &mut ChaCha8Rng, from: &[usize], n: usize| -> Vec<usize> {
        let mut v: Vec<usize> = from.choose_multiple(r, n).copied().collect();
        v.sort_unstable();
        v
    };
    let base_pred = pick_n(&mut r, &legacy, 54);
    let overlap: Vec<usize> = base_pred[..30].to_vec();
    let base_only: Vec<usize> = base_pred[30..].to_vec();
    let mut cand_pred: BTreeSet<usize> = overlap.iter().copied().collect();
    let mut cand_extra_reviewed: BTreeMap<Language, Vec<usize>> = BTreeMap::new();
    for (lang, total, reviewed) in [(En, 326 - 30, 112), (Fr, 41, 11), (Ar, 129, 17)] {
        let pool: Vec<usize> = (0..slots.len())
            .filter(|i| slots[*i].1 == lang && !base_pred.contains(i))
            .collect();
        let chosen = pick_n(&mut r, &pool, total);
        cand_extra_reviewed.insert(lang, pick_n(&mut r, &chosen, reviewed));
        cand_pred.extend(chosen);
    }

    // review outcomes
    let mut relevant: BTreeMap<usize, bool> = BTreeMap::new();
    let mut mark = |r: &mut ChaCha8Rng, idx: &[usize], yes: usize| {
        let mut flags: Vec<bool> = (0..idx.len()).map(|i| i < yes).collect();
        flags.shuffle(r);
        for (&i, f) in idx.iter().zip(flags) {
            relevant.insert(i, f);
        }
    };
    mark(&mut r, &overlap, 25);
    mark(&mut r, &base_only, 18);
    mark(&mut r, &cand_extra_reviewed[&En], 106);
    mark(&mut r, &cand_extra_reviewed[&Fr], 9);
    mark(&mut r, &cand_extra_reviewed[&Ar], 14);

    let mut articles = Vec::with_capacity(slots.len());
    let mut baseline = Vec::new();
    let mut candidate = Vec::with_capacity(slots.len());
    let mut decisions = Vec::new();
    let week_seconds = 7 * 24 * 3600;
    for (i, &(source, language)) in slots.iter().enumerate() {
        let at = epoch() + Duration::seconds((i as i64 * week_seconds) / slots.len() as i64);
        let looks_relevant = relevant.get(&i).copied().unwrap_or(cand_pred.contains(&i));
        let cats = if looks_relevant { random_categories(&mut r, true) } else { BTreeSet::new() };
        let (title, body) = article_text(&mut r, language, looks_relevant, &cats, i);
        let id = format!("wk-{}-{i:05}", source.as_str());
        let article = make_article(id.clone(), source, language, title, body, at);
        let scored_at = at + Duration::minutes(5);

        if source != Source::Gdelt {
            let t = base.threshold(language).expect("scored language");
            let s = if base_pred.contains(&i) { r.random_range(t..1.0) } else { r.random_range(0.0..t) };
            baseline.push(prediction(&mut r, &id, BASELINE_ARTIFACT, s, scored_at));
        }
        let t = cand.threshold(language).expect("scored language");
        let s = if cand_pred.contains(&i) { r.random_range(t..1.0) } else { r.random_range(0.0..t * 0.98) };
        candidate.push(prediction(&mut r, &id, CANDIDATE_ARTIFACT, s.max(0.0), scored_at));
        if let Some(&rel) = relevant.get(&i) {
            decisions.push(decision(&id, rel, cats.clone(), at + Duration::hours(20)));
        }
        articles.push(article);
    }
    WeekFixture { articles, baseline, candidate, decisions, baseline_policy: base, candidate_policy: cand }
}

/// Four months of reviewed traffic per language.
#[derive(Debug, Clone)]
pub struct DriftFixture {
    pub articles: Vec<Article>,
    pub predictions: Vec<Prediction>,
    pub decisions: Vec<ReviewDecision>,
}

pub const DRIFT_ARTIFACT: &str = "drift-model";
/// Confirmed out of 40 predicted-relevant reviews, months 1 to 4.
pub const DRIFT_CONFIRMED: [u64; 4] = [36, 37, 36, 29];
pub const FLAT_CONFIRMED: [u64; 4] = [36, 37, 36, 36];

/// Each month and language gets 40 reviewed articles above the 0.5
/// threshold and 10 below it. With `drop`, the final month's precision
/// falls from about 0.91 to 0.725.
pub fn drift_fixture(seed: u64, drop: bool) -> DriftFixture {
    let mut r = rng(seed, if drop { 30 } else { 31 });
    let confirmed = if drop { DRIFT_CONFIRMED } else { FLAT_CONFIRMED };
    let mut out = DriftFixture { articles: Vec::new(), predictions: Vec::new(), decisions: Vec::new() };
    let mut serial = 0;
    for (m, &yes) in confirmed.iter().enumerate() {
        let month_start = Utc.with_ymd_and_hms(2024, m as u32 + 1, 1, 0, 0, 0).unwrap();
        for language in Language::SCORED {
            let mut flags: Vec<bool> = (0..40).map(|i| i < yes as usize).collect();
            flags.shuffle(&mut r);
            let below: Vec<bool> = (0..10).map(|_| r.random_bool(0.2)).collect();
            for (k, (above, rel)) in flags.into_iter().map(|f| (true, f)).chain(below.into_iter().map(|f| (false, f))).enumerate() {
                serial += 1;
                let at = month_start + Duration::hours(6 + 13 * k as i64);
                let cats = if rel { random_categories(&mut r, true) } else { BTreeSet::new() };
                let (title, body) = article_text(&mut r, language, rel, &cats, serial);
                let id = format!("dr-{language}-{:02}-{k:02}", m + 1);
                let score = if above { r.random_range(0.5..1.0) } else { r.random_range(0.0..0.49) };
                out.predictions.push(prediction(&mut r, &id, DRIFT_ARTIFACT, score, at + Duration::minutes(5)));
                out.decisions.push(decision(&id, rel, cats, at + Duration::hours(3)));
                out.articles.push(make_article(id, Source::Gdelt, language, title, body, at));
            }
        }
    }
    out
}

/// Raw article records for replay, split 90/6/4 across GDELT, NewsAPI and
/// OSAC. About 2% of records repeat an earlier URL with tracking
/// parameters added, which the store must drop.
pub fn replay_fixture(seed: u64, total: usize) -> BTreeMap<Source, Vec<Article>> {
    let mut r = rng(seed, 40);
    let mut out: BTreeMap<Source, Vec<Article>> = BTreeMap::new();
    let start = epoch() + Duration::days(14);
    for i in 0..total {
        let roll = r.random_range(0..100);
        let source = match roll {
            0..90 => Source::Gdelt,
            90..96 => Source::Newsapi,
            _ => Source::Osac,
        };
        let language = if source == Source::Gdelt {
            *[Language::En, Language::En, Language::En, Language::Fr, Language::Ar, Language::Ar].choose(&mut r).expect("langs")
        } else {
            Language::En
        };
        let at = start + Duration::seconds(i as i64 * 60);
        let list = out.entry(source).or_default();
        if !list.is_empty() && r.random_bool(0.02) {
            let prev = list.choose(&mut r).expect("non-empty").clone();
            let mut dup = prev;
            dup.id = format!("rp-{i:05}");
            dup.url = format!("{}?utm_source=feed&utm_medium=rss", dup.url);
            dup.fetched_at = at;
            list.push(dup);
            continue;
        }
        let rel = r.random_bool(0.15);
        let cats = if rel { random_categories(&mut r, true) } else { BTreeSet::new() };
        let (title, body) = article_text(&mut r, language, rel, &cats, 100_000 + i);
        list.push(make_article(format!("rp-{i:05}"), source, language, title, body, at));
    }
    out
}

fn jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for rec in records {
        s.push_str(&serde_json::to_string(rec).expect("fixture records serialize"));
        s.push('\n');
    }
    s
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("fixture records serialize");
    s.push('\n');
    s
}

/// Number of articles in the committed crash-resume replay.
pub const REPLAY_TOTAL: usize = 3000;

/// Per-language sizes of the committed training corpus.
pub const CORPUS_SIZES: [(Language, usize); 3] = [(Language::En, 900), (Language::Fr, 450), (Language::Ar, 450)];

/// Every committed fixture file as (path relative to `fixtures/`, contents).
pub fn fixture_files(seed: u64) -> Vec<(PathBuf, String)> {
    let mut files = Vec::new();
    let mut add = |path: &str, contents: String| files.push((PathBuf::from(path), contents));

    let corpus = labeled_corpus(seed, &CORPUS_SIZES);
    let (articles, decisions): (Vec<Article>, Vec<ReviewDecision>) = corpus.into_iter().unzip();
    add(&format!("corpus/{ARTICLES}"), jsonl(&articles));
    add(&format!("corpus/{DECISIONS}"), jsonl(&decisions));

    add("staging/en.jsonl", jsonl(&english_staging(seed)));
    add("staging/fr.jsonl", jsonl(&french_staging(seed)));
    add("staging/ar.jsonl", jsonl(&arabic_staging(seed)));

    let (baseline, deployment) = deployment_counts();
    add("counts/baseline.json", pretty(&baseline));
    add("counts/deployment.json", pretty(&deployment));
    let (offline, live) = category_f1_tables();
    add("category_f1/offline.json", pretty(&offline));
    add("category_f1/live.json", pretty(&live));

    let week = week_fixture(seed);
    add(&format!("week/{ARTICLES}"), jsonl(&week.articles));
    add("week/baseline_predictions.jsonl", jsonl(&week.baseline));
    add("week/candidate_predictions.jsonl", jsonl(&week.candidate));
    add(&format!("week/{DECISIONS}"), jsonl(&week.decisions));
    add("week/baseline_policy.json", pretty(&week.baseline_policy));
    add("week/candidate_policy.json", pretty(&week.candidate_policy));

    for (dir, drop) in [("drift/drop", true), ("drift/flat", false)] {
        let d = drift_fixture(seed, drop);
        add(&format!("{dir}/{ARTICLES}"), jsonl(&d.articles));
        add(&format!("{dir}/{PREDICTIONS}"), jsonl(&d.predictions));
        add(&format!("{dir}/{DECISIONS}"), jsonl(&d.decisions));
    }
    add("drift/policy.json", pretty(&ThresholdPolicy::uniform(0.5, 0.8)));

    for (source, list) in replay_fixture(seed, REPLAY_TOTAL) {
        add(&format!("replay/{source}.jsonl"), jsonl(&list));
    }
    files
}

/// Write [`fixture_files`] under `dir`, creating directories as needed.
pub fn write_fixtures(dir: &std::path::Path, seed: u64) -> std::io::Result<usize> {
    let files = fixture_files(seed);
    for (rel, contents) in &files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, contents)?;
    }
    Ok(files.len())
}
