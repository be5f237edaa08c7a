use std::path::Path;
use std::time::Duration;

use chrono::Utc;
use triage_core::classifier::LinearScorer;
use triage_core::store::Store;
use triage_core::types::{ModelArtifact, Stage};
use triage_service::{serve, ConfigError, ServeError, ServiceConfig};

fn publish_zero_model(storage: &Path) -> String {
    let scorer = LinearScorer::zeros(8, 0);
    let mut store = Store::open(storage).unwrap();
    let meta = ModelArtifact {
        artifact_id: scorer.id().to_owned(),
        stage: Stage::Prod,
        created_at: Utc::now(),
        config_digest: "zeros".into(),
        weights_ref: String::new(),
    };
    store.publish_artifact(meta, &scorer.to_bytes()).unwrap();
    scorer.id().to_owned()
}

fn config(storage: &Path, artifact: &str) -> ServiceConfig {
    let text = format!(
        "storage = {:?}\nbind = \"127.0.0.1:0\"\nweekly_capacity = 10\n[scorer]\nbuiltin = \"{artifact}\"\n",
        storage.display().to_string()
    );
    ServiceConfig::from_toml(&text).unwrap()
}

fn field_of(err: &ServeError) -> Option<&str> {
    match err {
        ServeError::Config(c) => c.field(),
        _ => None,
    }
}

#[tokio::test]
async fn unknown_builtin_artifact_fails_startup() {
    let dir = tempfile::tempdir().unwrap();
    let err = serve(config(dir.path(), "lin-missing")).await.unwrap_err();
    assert_eq!(field_of(&err), Some("scorer.builtin"), "{err}");
}

#[tokio::test]
async fn zero_capacity_is_rejected_before_startup() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("service.toml");
    std::fs::write(&path, "storage = \"s\"\nweekly_capacity = 0\n[scorer]\nbuiltin = \"x\"\n").unwrap();
    let err = ServiceConfig::load(&path).unwrap_err();
    assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "weekly_capacity"), "{err}");
}

#[tokio::test]
async fn port_conflict_fails_startup() {
    let dir = tempfile::tempdir().unwrap();
    let id = publish_zero_model(dir.path());
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg = config(dir.path(), &id);
    cfg.bind = taken.local_addr().unwrap().to_string();
    let err = serve(cfg).await.unwrap_err();
    assert!(matches!(err, ServeError::Bind { .. }), "{err}");
}

#[tokio::test]
async fn replay_source_is_ingested_and_scored() {
    let dir = tempfile::tempdir().unwrap();
    let storage = dir.path().join("store");
    let id = publish_zero_model(&storage);
    let fixture = dir.path().join("feed.jsonl");
    let lines: Vec<String> = (0..25)
        .map(|i| {
            format!(
                r#"{{"url":"https://feed.example.org/{i}","language":"en","title":"story {i}","body":"text {i}","published_at":"2024-05-01T00:00:00Z","fetched_at":"2024-05-01T01:00:00Z"}}"#
            )
        })
        .collect();
    std::fs::write(&fixture, lines.join("\n")).unwrap();
    let sources = format!(
        "[[sources]]\nsource_id = \"feed\"\nkind = \"replay\"\nendpoint = {:?}\nrate = 7\npoll_interval = \"0s\"\n",
        fixture.display().to_string()
    );
    let text = format!(
        "storage = {:?}\nbind = \"127.0.0.1:0\"\nweekly_capacity = 10\n[scorer]\nbuiltin = \"{id}\"\n[schedule]\ntick = \"20ms\"\n{sources}",
        storage.display().to_string()
    );
    let cfg = ServiceConfig::from_toml(&text).unwrap();
    let state_dir = storage.clone();
    let server = tokio::spawn(serve(cfg));

    let deadline = std::time::Instant::now() + Duration::from_secs(20);
    loop {
        tokio::time::sleep(Duration::from_millis(50)).await;
        let store = Store::open_read_only(&state_dir).unwrap();
        if store.article_count() == 25 && store.unscored(&id).is_empty() {
            break;
        }
        assert!(std::time::Instant::now() < deadline, "replay did not finish");
    }
    server.abort();
}
