use std::collections::BTreeSet;
use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use triage_core::ingest::{ConnectorConfig, CursorStore, Scheduler};
use triage_core::store::{PutOutcome, Store, ARTICLES};
use triage_core::types::{Article, Category, Language, ModelArtifact, Prediction, ReviewDecision, Source, Stage};

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0), failure_persistence: None, ..Config::default() }
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap()
}

const SOURCES: [Source; 4] = [Source::Gdelt, Source::Newsapi, Source::Osac, Source::Manual];
const LANGS: [Language; 4] = [Language::En, Language::Fr, Language::Ar, Language::Other];

/// (url slot, text slot, source, language, tracking suffix)
fn article_ops() -> impl Strategy<Value = Vec<(u8, u8, usize, usize, bool)>> {
    prop::collection::vec((0u8..30, 0u8..30, 0usize..4, 0usize..4, any::<bool>()), 1..60)
}

fn article(i: usize, (url, text, src, lang, tracked): (u8, u8, usize, usize, bool)) -> Article {
    let suffix = if tracked { "?utm_source=feed#top" } else { "" };
    Article {
        id: format!("id{i}"),
        source: SOURCES[src],
        url: format!("https://News.Example.org/story/{url}/{suffix}"),
        language: LANGS[lang],
        title: format!("title {text}"),
        body: format!("body {text}"),
        published_at: t0(),
        fetched_at: t0() + Duration::minutes(i as i64),
    }
}

fn fill(store: &mut Store, ops: &[(u8, u8, usize, usize, bool)]) -> Vec<PutOutcome> {
    ops.iter().enumerate().map(|(i, op)| store.put_article(article(i, *op)).unwrap()).collect()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn counts_add_up_and_urls_stay_unique(ops in article_ops()) {
        let mut store = Store::in_memory();
        let outcomes = fill(&mut store, &ops);
        let stored = outcomes.iter().filter(|o| **o == PutOutcome::Stored).count();
        prop_assert_eq!(store.article_count(), stored);
        prop_assert_eq!(store.source_counts().values().sum::<usize>(), store.article_count());
        prop_assert_eq!(store.language_counts().values().sum::<usize>(), store.article_count());
        let urls: BTreeSet<&str> = store.articles().iter().map(|a| a.url.as_str()).collect();
        prop_assert_eq!(urls.len(), store.article_count());
        let hashes: BTreeSet<u64> = store.articles().iter().map(|a| a.content_hash()).collect();
        prop_assert_eq!(hashes.len(), store.article_count());
    }

    #[test]
    fn resubmitting_an_article_keeps_one_copy(op in (0u8..30, 0u8..30, 0usize..4, 0usize..4, any::<bool>()), n in 1usize..6) {
        let mut store = Store::in_memory();
        let first = store.put_article(article(0, op)).unwrap();
        prop_assert_eq!(first, PutOutcome::Stored);
        for k in 1..=n {
            let mut again = article(k, op);
            again.url = again.url.replace("https://News", "https://news");
            prop_assert_eq!(store.put_article(again).unwrap(), PutOutcome::DuplicateUrl);
        }
        prop_assert_eq!(store.article_count(), 1);
    }

    #[test]
    fn reload_gives_identical_answers(
        ops in article_ops(),
        scores in prop::collection::vec(0u32..=100, 60),
        votes in prop::collection::vec((0usize..60, 0usize..3, any::<bool>(), 0u8..32, 0i64..500), 0..40),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        fill(&mut store, &ops);
        let ids: Vec<String> = store.articles().iter().map(|a| a.id.clone()).collect();
        for (id, s) in ids.iter().zip(&scores) {
            let s = f64::from(*s) / 100.0;
            store.put_prediction(Prediction {
                article_id: id.clone(),
                artifact_id: "m".into(),
                relevance_score: s,
                category_scores: [s; 5],
                scored_at: t0(),
            }).unwrap();
        }
        for (a, annotator, relevant, mask, minutes) in votes {
            let categories: BTreeSet<Category> = if relevant {
                Category::ALL.into_iter().filter(|c| mask & (1 << c.index()) != 0).collect()
            } else {
                BTreeSet::new()
            };
            store.put_decision(ReviewDecision {
                article_id: ids[a % ids.len()].clone(),
                annotator_id: format!("r{annotator}"),
                relevant,
                categories,
                decided_at: t0() + Duration::minutes(minutes),
            }).unwrap();
        }
        let reopened = Store::open(dir.path()).unwrap();
        let read_only = Store::open_read_only(dir.path()).unwrap();
        for other in [&reopened, &read_only] {
            prop_assert_eq!(other.digest(), store.digest());
            prop_assert_eq!(other.articles(), store.articles());
            prop_assert_eq!(other.predictions(), store.predictions());
            prop_assert_eq!(other.consensus_decisions(), store.consensus_decisions());
            prop_assert_eq!(other.unscored("m"), store.unscored("m"));
        }
        for d in store.consensus_decisions() {
            prop_assert!(d.categories.is_empty() || d.relevant);
        }
    }

    #[test]
    fn latest_vote_per_annotator_wins(votes in prop::collection::vec((any::<bool>(), 0i64..100), 1..10)) {
        let mut store = Store::in_memory();
        store.put_article(article(0, (1, 1, 0, 0, false))).unwrap();
        let id = store.articles()[0].id.clone();
        for (relevant, minutes) in &votes {
            store.put_decision(ReviewDecision {
                article_id: id.clone(),
                annotator_id: "solo".into(),
                relevant: *relevant,
                categories: BTreeSet::new(),
                decided_at: t0() + Duration::minutes(*minutes),
            }).unwrap();
        }
        // the last of the latest-timestamped votes is the one that counts
        let latest = votes.iter().map(|v| v.1).max().unwrap();
        let expected = votes.iter().rev().find(|v| v.1 == latest).unwrap().0;
        prop_assert_eq!(store.latest_decision(&id).unwrap().unwrap().relevant, expected);
    }

    #[test]
    fn one_active_artifact_per_stage(events in prop::collection::vec((0usize..4, any::<bool>(), any::<bool>()), 1..20)) {
        let mut store = Store::in_memory();
        let mut expected: [Option<String>; 2] = [None, None];
        for (i, (k, prod, activate)) in events.into_iter().enumerate() {
            let id = format!("art{k}");
            if store.artifact(&id).is_none() {
                store.publish_artifact(
                    ModelArtifact {
                        artifact_id: id.clone(),
                        stage: Stage::Staging,
                        created_at: t0() + Duration::minutes(i as i64),
                        config_digest: String::new(),
                        weights_ref: String::new(),
                    },
                    &[],
                ).unwrap();
            }
            if activate {
                let stage = if prod { Stage::Prod } else { Stage::Staging };
                store.activate(&id, stage).unwrap();
                expected[usize::from(prod)] = Some(id);
            }
        }
        prop_assert_eq!(store.active_artifact(Stage::Staging).map(|a| a.artifact_id.clone()), expected[0].clone());
        prop_assert_eq!(store.active_artifact(Stage::Prod).map(|a| a.artifact_id.clone()), expected[1].clone());
    }
}

fn replay_lines(n: usize, dup_every: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let url_slot = if dup_every > 0 && i % dup_every == 0 && i > 0 { i - 1 } else { i };
        out.push_str(&format!(
            "{{\"url\":\"https://feed.example.org/{url_slot}?utm_medium=x\",\"language\":\"{}\",\"title\":\"story {i}\",\"body\":\"text {i}\",\"published_at\":\"2024-05-01T00:00:00Z\",\"fetched_at\":\"2024-05-01T0{}:00:00Z\"}}\n",
            ["en", "fr", "ar"][i % 3],
            i % 10,
        ));
    }
    out
}

fn scheduler(store: &Store, feeds: &[std::path::PathBuf], rate: usize) -> Scheduler {
    let connectors = feeds
        .iter()
        .map(|p| ConnectorConfig::replay(p.file_stem().unwrap().to_str().unwrap(), p, rate).build().unwrap())
        .collect();
    Scheduler::new(connectors, CursorStore::for_store(store).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(config(100))]

    /// Stop the scheduler after arbitrary tick counts, sometimes leaving a
    /// torn record behind, and resume from the persisted cursors.
    #[test]
    fn resumed_ingestion_matches_continuous_run(
        sizes in [5usize..60, 0usize..30],
        rate in 1usize..9,
        dup_every in 0usize..7,
        stops in prop::collection::vec((1usize..6, any::<bool>()), 1..5),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let feeds: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let p = dir.path().join(format!("feed{k}.jsonl"));
                std::fs::write(&p, replay_lines(n, dup_every)).unwrap();
                p
            })
            .collect();

        let whole = dir.path().join("whole");
        let mut store = Store::open(&whole).unwrap();
        scheduler(&store, &feeds, rate).run_until_drained(&mut store, 10_000).unwrap();
        let expected = store.digest();

        let cut = dir.path().join("cut");
        for (ticks, torn) in stops {
            let mut store = Store::open(&cut).unwrap();
            scheduler(&store, &feeds, rate).run(&mut store, ticks).unwrap();
            drop(store);
            if torn {
                let mut f = std::fs::OpenOptions::new().append(true).open(cut.join(ARTICLES)).unwrap();
                f.write_all(b"{\"id\":\"half-writ").unwrap();
            }
        }
        let mut store = Store::open(&cut).unwrap();
        scheduler(&store, &feeds, rate).run_until_drained(&mut store, 10_000).unwrap();
        prop_assert_eq!(store.digest(), expected);
    }
}
