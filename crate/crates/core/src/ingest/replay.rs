use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;

use super::{Batch, ConnectorError, RawArticle, SourceConnector};
use crate::types::Source;

/// Replays an article record file in file order, `rate` records per fetch.
/// The cursor is the index of the next record to emit.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    source_id: String,
    path: PathBuf,
    lines: Vec<String>,
    rate: usize,
    poll_interval: Duration,
    default_source: Source,
}

impl ReplaySource {
    pub fn open(source_id: &str, path: impl AsRef<Path>, rate: usize) -> Result<Self, ConnectorError> {
        let path = path.as_ref().to_path_buf();
        let text = fs::read_to_string(&path)
            .map_err(|e| ConnectorError::Fixture { path: path.clone(), message: e.to_string() })?;
        let lines = text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect();
        Ok(ReplaySource {
            source_id: source_id.to_owned(),
            path,
            lines,
            rate: rate.max(1),
            poll_interval: Duration::ZERO,
            default_source: Source::Gdelt,
        })
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn with_default_source(mut self, source: Source) -> Self {
        self.default_source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

impl SourceConnector for ReplaySource {
    fn source_id(&self) -> &str {
        &self.source_id
    }

    fn poll_interval(&self) -> Duration {
        self.poll_interval
    }

    fn fetch(&mut self, cursor: Option<&str>) -> Result<Batch, ConnectorError> {
        let start: usize = match cursor {
            None => 0,
            Some(c) => c.parse().map_err(|_| ConnectorError::Cursor(c.to_owned()))?,
        };
        if start > self.lines.len() {
            return Err(ConnectorError::Cursor(start.to_string()));
        }
        let end = (start + self.rate).min(self.lines.len());
        let now = Utc::now();
        let mut batch = Batch::default();
        for (i, line) in self.lines[start..end].iter().enumerate() {
            match serde_json::from_str::<RawArticle>(line) {
                Ok(raw) => batch.articles.push(raw.into_article(self.default_source, now)),
                Err(e) => batch
                    .rejected
                    .push((self.default_source, format!("{}:{}: {e}", self.path.display(), start + i + 1))),
            }
        }
        batch.next_cursor = Some(end.to_string());
        batch.exhausted = end == self.lines.len();
        Ok(batch)
    }
}
