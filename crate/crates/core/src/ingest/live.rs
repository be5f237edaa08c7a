//! Thin HTTP adapters for live feeds. They are exercised through their
//! payload parsers; the test suite never reaches the network.

use std::time::Duration;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Deserialize;

use super::{derive_id, Batch, ConnectorConfig, ConnectorError, SourceConnector};
use crate::types::{Article, Language, Source};

const GDELT_DOC_API: &str = "https://api.gdeltproject.org/api/v2/doc/doc";
const NEWSAPI_EVERYTHING: &str = "https://newsapi.org/v2/everything";
const HTTP_TIMEOUT: Duration = Duration::from_secs(30);

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(HTTP_TIMEOUT)).build().into()
}

fn language_from_name(name: &str) -> Option<Language> {
    match name.trim().to_ascii_lowercase().as_str() {
        "english" | "en" => Some(Language::En),
        "french" | "fr" => Some(Language::Fr),
        "arabic" | "ar" => Some(Language::Ar),
        "" => None,
        _ => Some(Language::Other),
    }
}

#[derive(Debug, Deserialize)]
struct GdeltResponse {
    #[serde(default)]
    articles: Vec<GdeltArticle>,
}

#[derive(Debug, Deserialize)]
struct GdeltArticle {
    url: String,
    #[serde(default)]
    title: String,
    seendate: String,
    #[serde(default)]
    language: String,
}

fn parse_seendate(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, "%Y%m%dT%H%M%SZ").ok().map(|n| n.and_utc())
}

/// Parse a GDELT DOC API `ArtList` payload. The cursor is the latest
/// `seendate` seen; the next query starts there (inclusive) and the store
/// drops the overlap.
pub(crate) fn parse_gdelt(payload: &str, now: DateTime<Utc>, cursor: Option<&str>) -> Result<Batch, ConnectorError> {
    let resp: GdeltResponse = serde_json::from_str(payload).map_err(|e| ConnectorError::Payload(e.to_string()))?;
    let mut batch = Batch { next_cursor: cursor.map(str::to_owned), ..Default::default() };
    let mut latest = cursor.and_then(|c| NaiveDateTime::parse_from_str(c, "%Y%m%d%H%M%S").ok()).map(|n| n.and_utc());
    for a in resp.articles {
        let Some(seen) = parse_seendate(&a.seendate) else {
            batch.rejected.push((Source::Gdelt, format!("bad seendate `{}`", a.seendate)));
            continue;
        };
        latest = Some(latest.map_or(seen, |l: DateTime<Utc>| l.max(seen)));
        let language = language_from_name(&a.language)
            .unwrap_or_else(|| super::detect_language(&a.title));
        batch.articles.push(Article {
            id: derive_id(Source::Gdelt, &a.url),
            source: Source::Gdelt,
            url: a.url,
            language,
            title: a.title,
            body: String::new(),
            published_at: seen,
            fetched_at: now,
        });
    }
    if let Some(l) = latest {
        batch.next_cursor = Some(l.format("%Y%m%d%H%M%S").to_string());
    }
    Ok(batch)
}

pub struct GdeltConnector {
    source_id: String,
    endpoint: String,
    query: String,
    poll_interval: Duration,
    agent: ureq::Agent,
}

impl GdeltConnector {
    pub fn new(cfg: &ConnectorConfig) -> Self {
        GdeltConnector {
            source_id: cfg.source_id.clone(),
            endpoint: cfg.endpoint.clone().unwrap_or_else(|| GDELT_DOC_API.to_owned()),
            query: cfg.query.clone().unwrap_or_else(|| "(attack OR killed OR violence)".to_owned()),
            poll_interval: cfg.poll_interval,
            agent: agent(),
        }
    }
}

impl SourceConnector for GdeltConnector {
    fn source_id(&self) -> &str {
        &self.source_id
    }

    fn poll_interval(&self) -> Duration {
        self.poll_interval
    }

    fn fetch(&mut self, cursor: Option<&str>) -> Result<Batch, ConnectorError> {
        let mut req = self
            .agent
            .get(&self.endpoint)
            .query("query", &self.query)
            .query("mode", "ArtList")
            .query("format", "json")
            .query("sort", "DateAsc")
            .query("maxrecords", "250");
        if let Some(c) = cursor {
            req = req.query("startdatetime", c);
        }
        let body = req
            .call()
            .map_err(|e| ConnectorError::Http(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| ConnectorError::Http(e.to_string()))?;
        parse_gdelt(&body, Utc::now(), cursor)
    }
}

#[derive(Debug, Deserialize)]
struct NewsApiResponse {
    status: String,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    articles: Vec<NewsApiArticle>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct NewsApiArticle {
    url: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    content: Option<String>,
    published_at: DateTime<Utc>,
}

/// Parse a NewsAPI `everything` payload. The cursor is the latest
/// `publishedAt` (RFC 3339).
pub(crate) fn parse_newsapi(
    payload: &str,
    language: Language,
    now: DateTime<Utc>,
    cursor: Option<&str>,
) -> Result<Batch, ConnectorError> {
    let resp: NewsApiResponse = serde_json::from_str(payload).map_err(|e| ConnectorError::Payload(e.to_string()))?;
    if resp.status != "ok" {
        return Err(ConnectorError::Payload(resp.message.unwrap_or(resp.status)));
    }
    let mut latest = cursor.and_then(|c| DateTime::parse_from_rfc3339(c).ok()).map(|d| d.with_timezone(&Utc));
    let mut batch = Batch::default();
    for a in resp.articles {
        latest = Some(latest.map_or(a.published_at, |l| l.max(a.published_at)));
        let body = [a.description, a.content].into_iter().flatten().collect::<Vec<_>>().join("\n");
        batch.articles.push(Article {
            id: derive_id(Source::Newsapi, &a.url),
            source: Source::Newsapi,
            url: a.url,
            language,
            title: a.title.unwrap_or_default(),
            body,
            published_at: a.published_at,
            fetched_at: now,
        });
    }
    batch.next_cursor = latest.map(|l| l.to_rfc3339()).or_else(|| cursor.map(str::to_owned));
    Ok(batch)
}

pub struct NewsApiConnector {
    source_id: String,
    endpoint: String,
    query: String,
    language: Language,
    api_key: String,
    poll_interval: Duration,
    agent: ureq::Agent,
}

impl NewsApiConnector {
    pub fn new(cfg: &ConnectorConfig) -> Result<Self, ConnectorError> {
        let var = cfg.credentials_env.clone().unwrap_or_else(|| "NEWSAPI_KEY".to_owned());
        let api_key = std::env::var(&var).map_err(|_| ConnectorError::MissingCredentials(var))?;
        Ok(NewsApiConnector {
            source_id: cfg.source_id.clone(),
            endpoint: cfg.endpoint.clone().unwrap_or_else(|| NEWSAPI_EVERYTHING.to_owned()),
            query: cfg.query.clone().unwrap_or_else(|| "attack".to_owned()),
            language: cfg.language.unwrap_or(Language::En),
            api_key,
            poll_interval: cfg.poll_interval,
            agent: agent(),
        })
    }
}

impl SourceConnector for NewsApiConnector {
    fn source_id(&self) -> &str {
        &self.source_id
    }

    fn poll_interval(&self) -> Duration {
        self.poll_interval
    }

    fn fetch(&mut self, cursor: Option<&str>) -> Result<Batch, ConnectorError> {
        let mut req = self
            .agent
            .get(&self.endpoint)
            .header("X-Api-Key", &self.api_key)
            .query("q", &self.query)
            .query("language", self.language.as_str())
            .query("sortBy", "publishedAt")
            .query("pageSize", "100");
        if let Some(c) = cursor {
            req = req.query("from", c);
        }
        let body = req
            .call()
            .map_err(|e| ConnectorError::Http(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| ConnectorError::Http(e.to_string()))?;
        parse_newsapi(&body, self.language, Utc::now(), cursor)
    }
}
