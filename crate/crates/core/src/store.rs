//! Append-oriented corpus store.
//!
//! Layout of a store directory:
//! ```text
//! {root}/
//! ├── articles.jsonl      # one Article per line
//! ├── predictions.jsonl   # one Prediction per line, keyed by article id
//! ├── decisions.jsonl     # one ReviewDecision per line
//! ├── artifacts.jsonl     # publish / activate events
//! ├── artifacts/{id}.bin  # scorer weights
//! └── cursors.json        # ingestion resumption tokens
//! ```
//!
//! Every mutation is appended and flushed before the in-memory index is
//! updated. On open, a torn final line (a crash in the middle of a write) is
//! truncated; any other unparsable line is reported as corruption.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::types::{
    digest_hex, Article, Category, DecisionError, Language, ModelArtifact, Prediction,
    ReviewDecision, Source, Stage,
};

pub const ARTICLES: &str = "articles.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const DECISIONS: &str = "decisions.jsonl";
pub const ARTIFACTS: &str = "artifacts.jsonl";
pub const CURSORS: &str = "cursors.json";

const TRACKING_PARAMS: &[&str] = &[
    "fbclid", "gclid", "dclid", "msclkid", "mc_cid", "mc_eid", "igshid", "_ga", "ref_src", "cmpid",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: unreadable record: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("invalid article: {0}")]
    InvalidArticle(String),
    #[error("article id `{0}` already used by a different article")]
    DuplicateId(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(#[from] DecisionError),
    #[error("article `{0}` not found")]
    NotFound(String),
    #[error("artifact `{0}` not found")]
    ArtifactNotFound(String),
    #[error("prediction score out of range for article `{0}`")]
    InvalidPrediction(String),
    #[error("time range start is after end")]
    InvalidRange,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Result of [`Store::put_article`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PutOutcome {
    Stored,
    DuplicateUrl,
    DuplicateContent,
}

#[derive(Debug, Clone, Default)]
pub struct ArticleFilter {
    pub source: Option<Source>,
    pub language: Option<Language>,
    /// Half-open `[start, end)` over `fetched_at`.
    pub time_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Requires a prediction under `artifact_id` (or the active PROD artifact).
    pub min_relevance: Option<f64>,
    pub artifact_id: Option<String>,
}

/// Lowercase scheme and host, drop the fragment and tracking parameters, trim
/// a trailing slash from the path.
pub fn normalize_url(raw: &str) -> Option<String> {
    let mut url = url::Url::parse(raw.trim()).ok()?;
    url.set_fragment(None);
    let kept: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| {
            let k = k.to_ascii_lowercase();
            !k.starts_with("utm_") && !TRACKING_PARAMS.contains(&k.as_str())
        })
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    if kept.is_empty() {
        url.set_query(None);
    } else {
        url.query_pairs_mut().clear().extend_pairs(kept);
    }
    let trimmed = url.path().trim_end_matches('/').to_owned();
    if !trimmed.is_empty() {
        url.set_path(&trimmed);
    }
    let mut out = url.to_string();
    if url.query().is_none() && out.ends_with('/') && !out.ends_with("://") {
        out.pop();
    }
    Some(out)
}

/// Immutable, queryable view of the corpus.
#[derive(Debug, Clone, Default)]
pub struct StoreData {
    articles: Vec<Article>,
    by_id: HashMap<String, usize>,
    by_url: HashMap<String, usize>,
    by_hash: HashMap<u64, usize>,
    source_counts: BTreeMap<Source, usize>,
    language_counts: BTreeMap<Language, usize>,
    predictions: Vec<Prediction>,
    prediction_index: HashMap<(String, String), usize>,
    decisions: Vec<ReviewDecision>,
    decisions_by_article: HashMap<String, Vec<usize>>,
    artifacts: BTreeMap<String, ModelArtifact>,
    active: BTreeMap<Stage, String>,
}

impl StoreData {
    pub fn article_count(&self) -> usize {
        self.articles.len()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn article(&self, id: &str) -> Option<&Article> {
        self.by_id.get(id).map(|&i| &self.articles[i])
    }

    pub fn source_counts(&self) -> &BTreeMap<Source, usize> {
        &self.source_counts
    }

    pub fn language_counts(&self) -> &BTreeMap<Language, usize> {
        &self.language_counts
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn prediction(&self, article_id: &str, artifact_id: &str) -> Option<&Prediction> {
        self.prediction_index
            .get(&(article_id.to_owned(), artifact_id.to_owned()))
            .map(|&i| &self.predictions[i])
    }

    pub fn decisions(&self) -> &[ReviewDecision] {
        &self.decisions
    }

    pub fn decisions_for(&self, article_id: &str) -> impl Iterator<Item = &ReviewDecision> {
        self.decisions_by_article
            .get(article_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.decisions[i])
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ModelArtifact> {
        self.artifacts.values()
    }

    pub fn artifact(&self, id: &str) -> Option<&ModelArtifact> {
        self.artifacts.get(id)
    }

    pub fn active_artifact(&self, stage: Stage) -> Option<&ModelArtifact> {
        self.active.get(&stage).and_then(|id| self.artifacts.get(id))
    }

    pub fn query_articles(&self, filter: &ArticleFilter) -> Result<Vec<&Article>, StoreError> {
        if let Some((start, end)) = filter.time_range {
            if start > end {
                return Err(StoreError::InvalidRange);
            }
        }
        let artifact = filter
            .artifact_id
            .clone()
            .or_else(|| self.active.get(&Stage::Prod).cloned());
        let mut out: Vec<&Article> = self
            .articles
            .iter()
            .filter(|a| filter.source.is_none_or(|s| a.source == s))
            .filter(|a| filter.language.is_none_or(|l| a.language == l))
            .filter(|a| {
                filter
                    .time_range
                    .is_none_or(|(start, end)| a.fetched_at >= start && a.fetched_at < end)
            })
            .filter(|a| match filter.min_relevance {
                None => true,
                Some(min) => artifact
                    .as_deref()
                    .and_then(|art| self.prediction(&a.id, art))
                    .is_some_and(|p| p.relevance_score >= min),
            })
            .collect();
        // stable: insertion order breaks fetched_at ties
        out.sort_by_key(|a| a.fetched_at);
        Ok(out)
    }

    /// Consensus over each annotator's latest decision.
    ///
    /// Relevance is decided by majority with ties going to relevant. A
    /// category is kept when at least half of the annotators voting relevant
    /// assigned it. A single annotator's decision is returned unchanged.
    pub fn latest_decision(&self, article_id: &str) -> Result<Option<ReviewDecision>, StoreError> {
        if !self.by_id.contains_key(article_id) {
            return Err(StoreError::NotFound(article_id.to_owned()));
        }
        let mut latest: BTreeMap<&str, &ReviewDecision> = BTreeMap::new();
        for d in self.decisions_for(article_id) {
            match latest.get(d.annotator_id.as_str()) {
                Some(prev) if prev.decided_at > d.decided_at => {}
                _ => {
                    latest.insert(&d.annotator_id, d);
                }
            }
        }
        Ok(consensus(latest.into_values().collect()))
    }

    /// Latest consensus for every article that has at least one decision,
    /// in first-decision order.
    pub fn consensus_decisions(&self) -> Vec<ReviewDecision> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for d in &self.decisions {
            if seen.insert(d.article_id.as_str()) {
                if let Ok(Some(c)) = self.latest_decision(&d.article_id) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn has_decision(&self, article_id: &str) -> bool {
        self.decisions_by_article.contains_key(article_id)
    }

    /// Articles on the scoring path without a prediction under `artifact_id`.
    pub fn unscored(&self, artifact_id: &str) -> Vec<&Article> {
        self.articles
            .iter()
            .filter(|a| a.language.is_scored() && self.prediction(&a.id, artifact_id).is_none())
            .collect()
    }

    /// Digest over the logical content of the store: the sets of articles,
    /// predictions (without timestamps) and decisions. Insertion order is
    /// not covered, so interleaving across connectors does not matter.
    pub fn digest(&self) -> String {
        fn section<T>(items: &[T], line: impl Fn(&T) -> Vec<u8>) -> Vec<u8> {
            let mut lines: Vec<Vec<u8>> = items.iter().map(line).collect();
            lines.sort_unstable();
            let mut buf = Vec::new();
            for l in lines {
                buf.extend_from_slice(&l);
                buf.push(b'\n');
            }
            buf.push(0x1e);
            buf
        }
        let mut buf = section(&self.articles, |a| serde_json::to_vec(a).expect("article serializes"));
        buf.extend(section(&self.predictions, |p| {
            let key = (&p.article_id, &p.artifact_id, p.relevance_score.to_bits(), p.category_scores.map(f64::to_bits));
            serde_json::to_vec(&key).expect("prediction serializes")
        }));
        buf.extend(section(&self.decisions, |d| serde_json::to_vec(d).expect("decision serializes")));
        digest_hex(&buf)
    }

    fn check_article(&self, article: &mut Article) -> Result<Option<PutOutcome>, StoreError> {
        if article.id.trim().is_empty() {
            return Err(StoreError::InvalidArticle("empty id".into()));
        }
        if article.url.trim().is_empty() {
            return Err(StoreError::InvalidArticle("empty url".into()));
        }
        if article.title.trim().is_empty() && article.body.trim().is_empty() {
            return Err(StoreError::InvalidArticle("title and body are both empty".into()));
        }
        article.url = normalize_url(&article.url)
            .ok_or_else(|| StoreError::InvalidArticle(format!("unparsable url `{}`", article.url)))?;
        if self.by_url.contains_key(&article.url) {
            return Ok(Some(PutOutcome::DuplicateUrl));
        }
        if self.by_hash.contains_key(&article.content_hash()) {
            return Ok(Some(PutOutcome::DuplicateContent));
        }
        if self.by_id.contains_key(&article.id) {
            return Err(StoreError::DuplicateId(article.id.clone()));
        }
        Ok(None)
    }

    fn index_article(&mut self, article: Article) {
        let idx = self.articles.len();
        self.by_id.insert(article.id.clone(), idx);
        self.by_url.insert(article.url.clone(), idx);
        self.by_hash.insert(article.content_hash(), idx);
        *self.source_counts.entry(article.source).or_default() += 1;
        *self.language_counts.entry(article.language).or_default() += 1;
        self.articles.push(article);
    }

    fn index_prediction(&mut self, p: Prediction) -> bool {
        let key = (p.article_id.clone(), p.artifact_id.clone());
        if self.prediction_index.contains_key(&key) {
            return false;
        }
        self.prediction_index.insert(key, self.predictions.len());
        self.predictions.push(p);
        true
    }

    fn index_decision(&mut self, d: ReviewDecision) {
        self.decisions_by_article
            .entry(d.article_id.clone())
            .or_default()
            .push(self.decisions.len());
        self.decisions.push(d);
    }

    fn apply_artifact_event(&mut self, event: ArtifactEvent) {
        match event {
            ArtifactEvent::Publish(meta) => {
                self.artifacts.insert(meta.artifact_id.clone(), meta);
            }
            ArtifactEvent::Activate { artifact_id, stage } => {
                self.active.insert(stage, artifact_id);
            }
        }
    }
}

fn consensus(latest: Vec<&ReviewDecision>) -> Option<ReviewDecision> {
    match latest.as_slice() {
        [] => None,
        [only] => Some((*only).clone()),
        many => {
            let yes: Vec<&&ReviewDecision> = many.iter().filter(|d| d.relevant).collect();
            let relevant = 2 * yes.len() >= many.len();
            let categories = if relevant {
                Category::ALL
                    .into_iter()
                    .filter(|c| 2 * yes.iter().filter(|d| d.categories.contains(c)).count() >= yes.len())
                    .collect()
            } else {
                BTreeSet::new()
            };
            Some(ReviewDecision {
                article_id: many[0].article_id.clone(),
                annotator_id: "consensus".into(),
                relevant,
                categories,
                decided_at: many.iter().map(|d| d.decided_at).max().expect("non-empty"),
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum ArtifactEvent {
    Publish(ModelArtifact),
    Activate { artifact_id: String, stage: Stage },
}

/// The store: an in-memory index plus, when backed by a directory, the
/// append-only journal files it was rebuilt from.
#[derive(Debug)]
pub struct Store {
    data: StoreData,
    root: Option<PathBuf>,
}

impl std::ops::Deref for Store {
    type Target = StoreData;

    fn deref(&self) -> &StoreData {
        &self.data
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Store { data: StoreData::default(), root: None }
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("artifacts")).map_err(io_err(&root))?;
        let mut data = StoreData::default();
        for article in read_records::<Article>(&root.join(ARTICLES))? {
            data.index_article(article);
        }
        for p in read_records::<Prediction>(&root.join(PREDICTIONS))? {
            data.index_prediction(p);
        }
        for d in read_records::<ReviewDecision>(&root.join(DECISIONS))? {
            data.index_decision(d);
        }
        for e in read_records::<ArtifactEvent>(&root.join(ARTIFACTS))? {
            data.apply_artifact_event(e);
        }
        Ok(Store { data, root: Some(root) })
    }

    /// Load a store directory into memory without touching it: no repair,
    /// no directories created. Later writes are not persisted.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        let load = |name: &str| -> Result<Option<PathBuf>, StoreError> {
            let path = root.join(name);
            Ok(path.exists().then_some(path))
        };
        let mut data = StoreData::default();
        if let Some(p) = load(ARTICLES)? {
            for a in load_jsonl::<Article>(&p)? {
                data.index_article(a);
            }
        }
        if let Some(p) = load(PREDICTIONS)? {
            for pr in load_jsonl::<Prediction>(&p)? {
                data.index_prediction(pr);
            }
        }
        if let Some(p) = load(DECISIONS)? {
            for d in load_jsonl::<ReviewDecision>(&p)? {
                data.index_decision(d);
            }
        }
        if let Some(p) = load(ARTIFACTS)? {
            for e in load_jsonl::<ArtifactEvent>(&p)? {
                data.apply_artifact_event(e);
            }
        }
        Ok(Store { data, root: None })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Immutable copy for offline jobs.
    pub fn snapshot(&self) -> Arc<StoreData> {
        Arc::new(self.data.clone())
    }

    pub fn put_article(&mut self, mut article: Article) -> Result<PutOutcome, StoreError> {
        if let Some(dup) = self.data.check_article(&mut article)? {
            return Ok(dup);
        }
        self.append(ARTICLES, &article)?;
        self.data.index_article(article);
        Ok(PutOutcome::Stored)
    }

    /// Returns `false` when a prediction for the same (article, artifact)
    /// pair already exists; the stored one is kept.
    pub fn put_prediction(&mut self, prediction: Prediction) -> Result<bool, StoreError> {
        if self.data.article(&prediction.article_id).is_none() {
            return Err(StoreError::NotFound(prediction.article_id));
        }
        let in_range = |s: f64| (0.0..=1.0).contains(&s);
        if !in_range(prediction.relevance_score) || !prediction.category_scores.iter().all(|&s| in_range(s)) {
            return Err(StoreError::InvalidPrediction(prediction.article_id));
        }
        if self.data.prediction(&prediction.article_id, &prediction.artifact_id).is_some() {
            return Ok(false);
        }
        self.append(PREDICTIONS, &prediction)?;
        Ok(self.data.index_prediction(prediction))
    }

    pub fn put_decision(&mut self, decision: ReviewDecision) -> Result<ReviewDecision, StoreError> {
        decision.validate()?;
        if self.data.article(&decision.article_id).is_none() {
            return Err(StoreError::NotFound(decision.article_id));
        }
        self.append(DECISIONS, &decision)?;
        self.data.index_decision(decision.clone());
        Ok(decision)
    }

    /// Record a new artifact. For directory-backed stores the weights are
    /// written to `artifacts/{id}.bin` first.
    pub fn publish_artifact(&mut self, mut meta: ModelArtifact, weights: &[u8]) -> Result<ModelArtifact, StoreError> {
        meta.weights_ref = format!("artifacts/{}.bin", meta.artifact_id);
        if let Some(root) = &self.root {
            let path = root.join(&meta.weights_ref);
            let tmp = tempfile::NamedTempFile::new_in(root.join("artifacts")).map_err(io_err(&path))?;
            fs::write(tmp.path(), weights).map_err(io_err(&path))?;
            tmp.persist(&path).map_err(|e| StoreError::Io { path: path.clone(), source: e.error })?;
        }
        let event = ArtifactEvent::Publish(meta.clone());
        self.append(ARTIFACTS, &event)?;
        self.data.apply_artifact_event(event);
        Ok(meta)
    }

    /// Make `artifact_id` the single active artifact for `stage`.
    pub fn activate(&mut self, artifact_id: &str, stage: Stage) -> Result<(), StoreError> {
        if !self.data.artifacts.contains_key(artifact_id) {
            return Err(StoreError::ArtifactNotFound(artifact_id.to_owned()));
        }
        let event = ArtifactEvent::Activate { artifact_id: artifact_id.to_owned(), stage };
        self.append(ARTIFACTS, &event)?;
        self.data.apply_artifact_event(event);
        Ok(())
    }

    pub fn artifact_weights(&self, artifact_id: &str) -> Result<Vec<u8>, StoreError> {
        let meta = self
            .data
            .artifact(artifact_id)
            .ok_or_else(|| StoreError::ArtifactNotFound(artifact_id.to_owned()))?;
        let root = self.root.as_ref().ok_or_else(|| StoreError::ArtifactNotFound(artifact_id.to_owned()))?;
        let path = root.join(&meta.weights_ref);
        fs::read(&path).map_err(io_err(&path))
    }

    fn append<T: Serialize>(&self, file: &str, record: &T) -> Result<(), StoreError> {
        let Some(root) = &self.root else { return Ok(()) };
        let path = root.join(file);
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(&line).map_err(io_err(&path))?;
        f.flush().map_err(io_err(&path))
    }
}

/// Read a JSON-lines file, truncating a torn final line in place.
pub(crate) fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::Io { path: path.to_path_buf(), source: e }),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "truncating torn record");
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
    }
    let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    bytes[..complete]
        .split(|&b| b == b'\n')
        .enumerate()
        .filter(|(_, line)| !line.iter().all(u8::is_ascii_whitespace))
        .map(|(i, line)| {
            serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                file: file.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parse a JSON-lines file without repairing it.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt { file: file.clone(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), StoreError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}
