//! Source connectors and the polling scheduler that feeds the store.

mod live;
mod manual;
mod replay;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use live::{GdeltConnector, NewsApiConnector};
pub use manual::{manual_upload, ManualOutcome, UploadOutcome};
pub use replay::ReplaySource;

use crate::store::{PutOutcome, Store, StoreError, CURSORS};
use crate::types::{digest_hex, Article, Language, Source};

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(15 * 60);
const MAX_BACKOFF: Duration = Duration::from_secs(60 * 60);

#[derive(Debug, thiserror::Error)]
pub enum ConnectorError {
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("http: {0}")]
    Http(String),
    #[error("environment variable `{0}` is not set")]
    MissingCredentials(String),
    #[error("unexpected payload: {0}")]
    Payload(String),
    #[error("invalid cursor `{0}`")]
    Cursor(String),
}

/// One fetch from a connector.
#[derive(Debug, Default)]
pub struct Batch {
    pub articles: Vec<Article>,
    /// Records the connector could not turn into articles, booked under
    /// the connector's default source.
    pub rejected: Vec<(Source, String)>,
    pub next_cursor: Option<String>,
    /// No more records will ever come from this connector.
    pub exhausted: bool,
}

/// A pull-based article source. `fetch` must be resumable: replaying from a
/// persisted cursor never skips records an uninterrupted run would produce.
pub trait SourceConnector: Send {
    fn source_id(&self) -> &str;

    fn poll_interval(&self) -> Duration;

    fn fetch(&mut self, cursor: Option<&str>) -> Result<Batch, ConnectorError>;
}

/// Script-range fallback when a source carries no language metadata.
pub fn detect_language(text: &str) -> Language {
    let is_arabic = |c: char| {
        matches!(c as u32, 0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF)
    };
    let (mut letters, mut arabic) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if is_arabic(c) {
            arabic += 1;
        }
    }
    if letters > 0 && 2 * arabic >= letters {
        Language::Ar
    } else {
        Language::Other
    }
}

/// Deterministic article id derived from the source and URL.
pub fn derive_id(source: Source, url: &str) -> String {
    let norm = crate::store::normalize_url(url).unwrap_or_else(|| url.trim().to_owned());
    format!("{}-{}", source.as_str(), digest_hex(norm.as_bytes()))
}

/// Wire shape of an article record where id and language may be missing.
#[derive(Debug, Clone, Deserialize)]
pub(crate) struct RawArticle {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub source: Option<Source>,
    pub url: String,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub published_at: DateTime<Utc>,
    #[serde(default)]
    pub fetched_at: Option<DateTime<Utc>>,
}

impl RawArticle {
    pub(crate) fn into_article(self, default_source: Source, now: DateTime<Utc>) -> Article {
        let source = self.source.unwrap_or(default_source);
        let language = self
            .language
            .unwrap_or_else(|| detect_language(&format!("{} {}", self.title, self.body)));
        Article {
            id: self.id.filter(|s| !s.trim().is_empty()).unwrap_or_else(|| derive_id(source, &self.url)),
            source,
            url: self.url,
            language,
            title: self.title,
            body: self.body,
            published_at: self.published_at,
            fetched_at: self.fetched_at.unwrap_or(now),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectorKind {
    Replay,
    Gdelt,
    Newsapi,
}

/// Per-source configuration block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorConfig {
    pub source_id: String,
    pub kind: ConnectorKind,
    #[serde(with = "humantime_serde", default = "default_interval")]
    pub poll_interval: Duration,
    /// Fixture path for replay, base URL for live sources.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credentials_env: Option<String>,
    /// Source-side query string, interpreted by the adapter.
    #[serde(default)]
    pub query: Option<String>,
    /// Records per fetch for replay sources.
    #[serde(default = "default_rate")]
    pub rate: usize,
    /// Source assigned to records that do not name one.
    #[serde(default)]
    pub source: Option<Source>,
    #[serde(default)]
    pub language: Option<Language>,
}

fn default_interval() -> Duration {
    DEFAULT_POLL_INTERVAL
}

fn default_rate() -> usize {
    100
}

impl ConnectorConfig {
    pub fn replay(source_id: &str, fixture: &Path, rate: usize) -> Self {
        ConnectorConfig {
            source_id: source_id.into(),
            kind: ConnectorKind::Replay,
            poll_interval: Duration::ZERO,
            endpoint: Some(fixture.display().to_string()),
            credentials_env: None,
            query: None,
            rate,
            source: None,
            language: None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn SourceConnector>, ConnectorError> {
        match self.kind {
            ConnectorKind::Replay => {
                let path = self.endpoint.as_deref().ok_or_else(|| ConnectorError::Fixture {
                    path: PathBuf::new(),
                    message: "replay source needs a fixture path".into(),
                })?;
                Ok(Box::new(
                    ReplaySource::open(&self.source_id, path, self.rate)?
                        .with_poll_interval(self.poll_interval)
                        .with_default_source(self.source.unwrap_or(Source::Gdelt)),
                ))
            }
            ConnectorKind::Gdelt => Ok(Box::new(GdeltConnector::new(self))),
            ConnectorKind::Newsapi => Ok(Box::new(NewsApiConnector::new(self)?)),
        }
    }
}

/// Resumption tokens, persisted atomically after every successful batch.
#[derive(Debug, Default)]
pub struct CursorStore {
    path: Option<PathBuf>,
    cursors: BTreeMap<String, String>,
}

impl CursorStore {
    pub fn in_memory() -> Self {
        CursorStore::default()
    }

    /// Cursors kept next to the store's journal files.
    pub fn for_store(store: &Store) -> Result<Self, StoreError> {
        match store.root() {
            Some(root) => Self::open(root.join(CURSORS)),
            None => Ok(Self::in_memory()),
        }
    }

    pub fn open(path: PathBuf) -> Result<Self, StoreError> {
        let cursors = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                file: path.display().to_string(),
                line: 1,
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        Ok(CursorStore { path: Some(path), cursors })
    }

    pub fn get(&self, source_id: &str) -> Option<&str> {
        self.cursors.get(source_id).map(String::as_str)
    }

    pub fn set(&mut self, source_id: &str, cursor: String) -> Result<(), StoreError> {
        self.cursors.insert(source_id.to_owned(), cursor);
        let Some(path) = &self.path else { return Ok(()) };
        let io = |e: std::io::Error| StoreError::Io { path: path.clone(), source: e };
        let dir = path.parent().unwrap_or(Path::new("."));
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        fs::write(tmp.path(), serde_json::to_vec_pretty(&self.cursors).expect("cursors serialize")).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTally {
    pub fetched: usize,
    pub stored: usize,
    pub duplicates: usize,
    pub rejected: usize,
}

impl SourceTally {
    fn add(&mut self, other: &SourceTally) {
        self.fetched += other.fetched;
        self.stored += other.stored;
        self.duplicates += other.duplicates;
        self.rejected += other.rejected;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorStatus {
    pub batches: usize,
    pub fetched: usize,
    pub exhausted: bool,
    /// Last failure, if the most recent poll failed.
    pub error: Option<String>,
    pub retry_after_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub by_source: BTreeMap<Source, SourceTally>,
    pub connectors: BTreeMap<String, ConnectorStatus>,
}

impl IngestionReport {
    pub fn total(&self) -> SourceTally {
        let mut t = SourceTally::default();
        for s in self.by_source.values() {
            t.add(s);
        }
        t
    }

    /// Fraction of fetched records per source.
    pub fn shares(&self) -> BTreeMap<Source, f64> {
        let total = self.total().fetched.max(1) as f64;
        self.by_source.iter().map(|(s, t)| (*s, t.fetched as f64 / total)).collect()
    }

    /// Per-source tally table with each source's share of fetched records.
    pub fn render(&self) -> String {
        let shares = self.shares();
        let mut rows = vec![[
            "source".to_owned(),
            "fetched".into(),
            "stored".into(),
            "duplicates".into(),
            "rejected".into(),
            "share".into(),
        ]];
        let row = |name: String, t: &SourceTally, share: f64| {
            [
                name,
                t.fetched.to_string(),
                t.stored.to_string(),
                t.duplicates.to_string(),
                t.rejected.to_string(),
                format!("{:.1}%", share * 100.0),
            ]
        };
        for (s, t) in &self.by_source {
            rows.push(row(s.to_string(), t, shares[s]));
        }
        let total = self.total();
        rows.push(row("total".into(), &total, if total.fetched > 0 { 1.0 } else { 0.0 }));
        let mut out = crate::calibration::aligned_table(&rows);
        for (id, st) in &self.connectors {
            if let Some(e) = &st.error {
                out.push_str(&format!("connector {id} failing: {e}\n"));
            }
        }
        out
    }

    pub fn merge(&mut self, other: IngestionReport) {
        for (s, t) in other.by_source {
            self.by_source.entry(s).or_default().add(&t);
        }
        for (id, st) in other.connectors {
            let e = self.connectors.entry(id).or_default();
            e.batches += st.batches;
            e.fetched += st.fetched;
            e.exhausted = st.exhausted;
            e.error = st.error;
            e.retry_after_secs = st.retry_after_secs;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("duplicate source_id `{0}`")]
    DuplicateSourceId(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Slot {
    connector: Box<dyn SourceConnector>,
    next_due: Instant,
    failures: u32,
    exhausted: bool,
}

/// Polls registered connectors and writes their batches into the store.
/// Cursors are its only durable state.
pub struct Scheduler {
    slots: Vec<Slot>,
    cursors: CursorStore,
}

impl Scheduler {
    pub fn new(connectors: Vec<Box<dyn SourceConnector>>, cursors: CursorStore) -> Result<Self, ScheduleError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &connectors {
            if !seen.insert(c.source_id().to_owned()) {
                return Err(ScheduleError::DuplicateSourceId(c.source_id().to_owned()));
            }
        }
        let now = Instant::now();
        let slots = connectors
            .into_iter()
            .map(|connector| Slot { connector, next_due: now, failures: 0, exhausted: false })
            .collect();
        Ok(Scheduler { slots, cursors })
    }

    /// True once every connector reported it has nothing more to give.
    pub fn drained(&self) -> bool {
        self.slots.iter().all(|s| s.exhausted)
    }

    pub fn cursors(&self) -> &CursorStore {
        &self.cursors
    }

    /// Poll every due connector once.
    pub fn tick(&mut self, store: &mut Store) -> Result<IngestionReport, ScheduleError> {
        let mut report = IngestionReport::default();
        let now = Instant::now();
        for slot in &mut self.slots {
            if slot.exhausted || slot.next_due > now {
                continue;
            }
            let id = slot.connector.source_id().to_owned();
            let status = report.connectors.entry(id.clone()).or_default();
            let cursor = self.cursors.get(&id).map(str::to_owned);
            match slot.connector.fetch(cursor.as_deref()) {
                Ok(batch) => {
                    slot.failures = 0;
                    slot.next_due = now + slot.connector.poll_interval();
                    status.batches += 1;
                    status.fetched += batch.articles.len() + batch.rejected.len();
                    status.exhausted = batch.exhausted;
                    for (src, reason) in &batch.rejected {
                        tracing::warn!(source = %id, %reason, "unparsable record");
                        let t = report.by_source.entry(*src).or_default();
                        t.fetched += 1;
                        t.rejected += 1;
                    }
                    for article in batch.articles {
                        let tally = report.by_source.entry(article.source).or_default();
                        tally.fetched += 1;
                        match store.put_article(article) {
                            Ok(PutOutcome::Stored) => tally.stored += 1,
                            Ok(_) => tally.duplicates += 1,
                            Err(StoreError::Io { path, source }) => return Err(StoreError::Io { path, source }.into()),
                            Err(e) => {
                                tracing::warn!(source = %id, error = %e, "article rejected");
                                tally.rejected += 1;
                            }
                        }
                    }
                    if let Some(next) = batch.next_cursor {
                        self.cursors.set(&id, next)?;
                    }
                    slot.exhausted = batch.exhausted;
                }
                Err(e) => {
                    slot.failures += 1;
                    let base = slot.connector.poll_interval().max(Duration::from_secs(1));
                    let backoff = base.saturating_mul(1 << slot.failures.min(6)).min(MAX_BACKOFF);
                    slot.next_due = now + backoff;
                    tracing::warn!(source = %id, error = %e, retry_after = ?backoff, "connector failed");
                    status.error = Some(e.to_string());
                    status.retry_after_secs = Some(backoff.as_secs());
                }
            }
        }
        Ok(report)
    }

    /// Run `ticks` scheduler ticks back to back.
    pub fn run(&mut self, store: &mut Store, ticks: usize) -> Result<IngestionReport, ScheduleError> {
        let mut report = IngestionReport::default();
        for _ in 0..ticks {
            report.merge(self.tick(store)?);
        }
        Ok(report)
    }

    /// Tick until every connector is exhausted or `max_ticks` is reached.
    pub fn run_until_drained(&mut self, store: &mut Store, max_ticks: usize) -> Result<IngestionReport, ScheduleError> {
        let mut report = IngestionReport::default();
        for _ in 0..max_ticks {
            if self.drained() {
                break;
            }
            report.merge(self.tick(store)?);
        }
        Ok(report)
    }
}

/// Register `connectors` and run `ticks` ticks against `store`.
pub fn run_schedule(
    connectors: Vec<Box<dyn SourceConnector>>,
    store: &mut Store,
    ticks: usize,
) -> Result<IngestionReport, ScheduleError> {
    let cursors = CursorStore::for_store(store)?;
    Scheduler::new(connectors, cursors)?.run(store, ticks)
}
