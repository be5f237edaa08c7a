//! The long-running triage service: scheduled ingestion and scoring, the
//! review queue, calibration and monitoring endpoints.

pub mod api;
pub mod config;
pub mod queue;
pub mod scheduler;

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use triage_core::calibration::ThresholdPolicy;
use triage_core::classifier::{ExternalScorer, LinearScorer, Scorer};
use triage_core::ingest::SourceConnector;
use triage_core::store::Store;

pub use api::{router, AppState, Clock, ErrorBody, Health};
pub use config::{ConfigError, ServiceConfig};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl ServeError {
    fn field(field: impl Into<String>, message: impl ToString) -> Self {
        ServeError::Config(ConfigError::Invalid { field: field.into(), message: message.to_string() })
    }
}

/// Threshold policy for startup: the configured file if it exists,
/// otherwise a uniform 0.5 policy (written to the path when one is set).
pub fn initial_policy(config: &ServiceConfig) -> Result<ThresholdPolicy, ServeError> {
    match &config.policy {
        Some(path) if path.exists() => ThresholdPolicy::load(path).map_err(|e| ServeError::field("policy", e)),
        Some(path) => {
            let p = ThresholdPolicy::uniform(0.5, 0.5);
            p.save(path).map_err(|e| ServeError::field("policy", e))?;
            Ok(p)
        }
        None => Ok(ThresholdPolicy::uniform(0.5, 0.5)),
    }
}

/// Build the configured scorer. A builtin artifact must be published in
/// the store.
pub fn build_scorer(config: &ServiceConfig, store: &Store) -> Result<Arc<dyn Scorer>, ServeError> {
    if let Some(url) = &config.scorer.external {
        return Ok(Arc::new(ExternalScorer::new(url.clone(), config.scorer.timeout)));
    }
    let id = config.scorer.builtin.as_deref().expect("validated scorer mode");
    let bytes = store.artifact_weights(id).map_err(|e| ServeError::field("scorer.builtin", e))?;
    let scorer = LinearScorer::from_bytes(&bytes).map_err(|e| ServeError::field("scorer.builtin", e))?;
    if scorer.id() != id {
        return Err(ServeError::field("scorer.builtin", format!("weights for `{id}` hash to `{}`", scorer.id())));
    }
    Ok(Arc::new(scorer))
}

pub fn build_connectors(config: &ServiceConfig) -> Result<Vec<Box<dyn SourceConnector>>, ServeError> {
    config
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| s.build().map_err(|e| ServeError::field(format!("sources[{i}]"), e)))
        .collect()
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Run the service until SIGINT or SIGTERM. Prints `listening on ADDR`
/// once the socket is bound.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    config.validate()?;
    let store = Store::open(&config.storage).map_err(|e| ServeError::field("storage", e))?;
    let policy = initial_policy(&config)?;
    let scorer = build_scorer(&config, &store)?;
    let connectors = build_connectors(&config)?;
    let mut state = AppState::new(store, policy, scorer, config.weekly_capacity);
    if let Some(path) = &config.policy {
        state = state.with_policy_path(path.clone());
    }

    let listener = tokio::net::TcpListener::bind(config.bind_addr())
        .await
        .map_err(|source| ServeError::Bind { addr: config.bind.clone(), source })?;
    let addr = listener.local_addr().map_err(|e| ServeError::Runtime(e.to_string()))?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();

    let jobs = scheduler::spawn(state.clone(), connectors, config.schedule.clone())
        .map_err(|e| ServeError::Runtime(e.to_string()))?;
    let served = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown_signal()).await;
    // writes are synchronous, so stopping the loop is all the flushing needed
    tokio::task::spawn_blocking(move || jobs.shutdown()).await.ok();
    served.map_err(|e| ServeError::Runtime(e.to_string()))
}

/// Blocking entry point with its own runtime.
pub fn run(config: ServiceConfig) -> Result<(), ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .thread_keep_alive(Duration::from_secs(10))
        .build()
        .map_err(|e| ServeError::Runtime(e.to_string()))?;
    rt.block_on(serve(config))
}
