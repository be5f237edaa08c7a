//! Service configuration, read from TOML.
//!
//! ```toml
//! storage = "var/store"
//! bind = "127.0.0.1:8080"
//! weekly_capacity = 367
//! policy = "var/policy.json"
//!
//! [scorer]
//! builtin = "lin-3f2a..."
//!
//! [schedule]
//! tick = "5s"
//! monitor = "1h"
//!
//! [[sources]]
//! source_id = "gdelt-replay"
//! kind = "replay"
//! endpoint = "fixtures/replay/gdelt.jsonl"
//! ```

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use triage_core::ingest::{ConnectorConfig, ConnectorKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_timeout() -> Duration {
    Duration::from_secs(5)
}

/// Exactly one of `builtin` (a published artifact id) or `external` (a
/// scorer endpoint URL) must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub external: Option<String>,
    #[serde(with = "humantime_serde", default = "default_timeout")]
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Scheduler tick: poll due connectors, then score what is new.
    #[serde(with = "humantime_serde", default = "Schedule::default_tick")]
    pub tick: Duration,
    /// Drift check over reviewed predictions.
    #[serde(with = "humantime_serde", default = "Schedule::default_monitor")]
    pub monitor: Duration,
}

impl Schedule {
    fn default_tick() -> Duration {
        Duration::from_secs(5)
    }

    fn default_monitor() -> Duration {
        Duration::from_secs(3600)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { tick: Self::default_tick(), monitor: Self::default_monitor() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub storage: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    pub weekly_capacity: u64,
    /// Threshold policy file. Read at startup and rewritten by
    /// `PUT /config/thresholds`.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub sources: Vec<ConnectorConfig>,
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are taken from the config file's directory
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let join = |p: &Path| if p.is_relative() { dir.join(p) } else { p.to_owned() };
        self.storage = join(&self.storage);
        self.policy = self.policy.as_deref().map(join);
        for s in &mut self.sources {
            if s.kind == ConnectorKind::Replay {
                if let Some(e) = &s.endpoint {
                    s.endpoint = Some(join(Path::new(e)).display().to_string());
                }
            }
        }
    }

    pub fn bind_addr(&self) -> SocketAddr {
        self.bind.parse().expect("validated bind address")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.storage.as_os_str().is_empty() {
            return Err(ConfigError::invalid("storage", "must not be empty"));
        }
        if self.bind.parse::<SocketAddr>().is_err() {
            return Err(ConfigError::invalid("bind", format!("`{}` is not a socket address", self.bind)));
        }
        if self.weekly_capacity == 0 {
            return Err(ConfigError::invalid("weekly_capacity", "must be positive"));
        }
        match (&self.scorer.builtin, &self.scorer.external) {
            (Some(_), Some(_)) => return Err(ConfigError::invalid("scorer", "set either `builtin` or `external`, not both")),
            (None, None) => return Err(ConfigError::invalid("scorer", "one of `builtin` or `external` is required")),
            (Some(id), None) if id.trim().is_empty() => {
                return Err(ConfigError::invalid("scorer.builtin", "artifact id must not be empty"))
            }
            (None, Some(url)) if !(url.starts_with("http://") || url.starts_with("https://")) => {
                return Err(ConfigError::invalid("scorer.external", format!("`{url}` is not an http(s) URL")))
            }
            _ => {}
        }
        if self.scorer.timeout.is_zero() {
            return Err(ConfigError::invalid("scorer.timeout", "must be positive"));
        }
        if self.schedule.tick.is_zero() {
            return Err(ConfigError::invalid("schedule.tick", "must be positive"));
        }
        if self.schedule.monitor.is_zero() {
            return Err(ConfigError::invalid("schedule.monitor", "must be positive"));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if s.source_id.trim().is_empty() {
                return Err(ConfigError::invalid(format!("sources[{i}].source_id"), "must not be empty"));
            }
            if !ids.insert(s.source_id.as_str()) {
                return Err(ConfigError::invalid(format!("sources[{i}].source_id"), format!("duplicate `{}`", s.source_id)));
            }
            if s.kind == ConnectorKind::Replay && s.endpoint.is_none() {
                return Err(ConfigError::invalid(format!("sources[{i}].endpoint"), "replay sources need a fixture path"));
            }
        }
        Ok(())
    }
}
