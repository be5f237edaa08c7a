//! HTTP endpoints.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use triage_core::calibration::{
    relevance_table, render_selection, select_threshold, staging_records, Estimator, OperatingPoint, PolicyError,
    SelectionError, SelectionMode, ThresholdPolicy,
};
use triage_core::classifier::{ScoreError, ScoreRequest, ScoreResponse, Scorer};
use triage_core::monitor::{bucket_metrics, detect_drift, reviewed_items, DriftReport, DriftRule, MetricsBucket};
use triage_core::store::{Store, StoreError};
use triage_core::types::{Article, Category, DecisionError, Language, ReviewDecision, Source, Stage};

use crate::queue::{review_queue, ReviewQueue};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub const DEFAULT_QUEUE_LIMIT: usize = 100;

/// Shared service state. The store is mutated only under its write lock.
pub struct Shared {
    pub store: RwLock<Store>,
    pub policy: RwLock<ThresholdPolicy>,
    pub policy_path: Option<PathBuf>,
    pub scorer: Arc<dyn Scorer>,
    pub weekly_capacity: u64,
    pub clock: Clock,
    pub drift_rule: DriftRule,
    /// Set once every connector is exhausted and nothing is left to score.
    pub drained: AtomicBool,
}

#[derive(Clone)]
pub struct AppState(pub Arc<Shared>);

impl AppState {
    pub fn new(store: Store, policy: ThresholdPolicy, scorer: Arc<dyn Scorer>, weekly_capacity: u64) -> Self {
        AppState(Arc::new(Shared {
            store: RwLock::new(store),
            policy: RwLock::new(policy),
            policy_path: None,
            scorer,
            weekly_capacity,
            clock: Arc::new(Utc::now),
            drift_rule: DriftRule::default(),
            drained: AtomicBool::new(false),
        }))
    }

    /// Only valid before the state is shared.
    pub fn with_clock(mut self, clock: Clock) -> Self {
        Arc::get_mut(&mut self.0).expect("state not yet shared").clock = clock;
        self
    }

    pub fn with_policy_path(mut self, path: PathBuf) -> Self {
        Arc::get_mut(&mut self.0).expect("state not yet shared").policy_path = Some(path);
        self
    }

    pub fn store(&self) -> RwLockReadGuard<'_, Store> {
        self.0.store.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn store_mut(&self) -> RwLockWriteGuard<'_, Store> {
        self.0.store.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn policy(&self) -> ThresholdPolicy {
        self.0.policy.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.0.clock)()
    }

    /// The scorer's artifact, falling back to the store's production artifact.
    pub fn active_artifact(&self) -> Option<String> {
        self.0
            .scorer
            .artifact_id()
            .or_else(|| self.store().active_artifact(Stage::Prod).map(|a| a.artifact_id.clone()))
    }

    pub fn is_drained(&self) -> bool {
        self.0.drained.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), field: None } }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn validation(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).with_field(field)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::ArtifactNotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::InvalidDecision(d) => decision_error(d),
            other => ApiError::internal(other.to_string()),
        }
    }
}

fn decision_error(e: DecisionError) -> ApiError {
    let field = match e {
        DecisionError::EmptyField(f) => f,
        DecisionError::CategoriesWithoutRelevance => "categories",
    };
    ApiError::validation(field, e.to_string())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/review/queue", get(queue))
        .route("/review/{id}/decision", post(submit_decision))
        .route("/score", post(score))
        .route("/jobs/calibrate", post(calibrate))
        .route("/metrics/precision", get(precision_metrics))
        .route("/config/thresholds", get(get_thresholds).put(put_thresholds))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub active_artifact: Option<String>,
    pub policy_digest: String,
    pub drained: bool,
    pub articles: usize,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        active_artifact: state.active_artifact(),
        policy_digest: state.policy().digest(),
        drained: state.is_drained(),
        articles: state.store().article_count(),
    })
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    language: Option<Language>,
    limit: Option<usize>,
}

async fn queue(
    State(state): State<AppState>,
    params: Result<Query<QueueParams>, QueryRejection>,
) -> Result<Json<ReviewQueue>, ApiError> {
    let Query(params) = params?;
    let artifact = state.active_artifact();
    let policy = state.policy();
    let store = state.store();
    Ok(Json(review_queue(
        &store,
        &policy,
        artifact.as_deref(),
        params.language,
        params.limit.unwrap_or(DEFAULT_QUEUE_LIMIT),
        state.0.weekly_capacity,
        state.now(),
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub annotator_id: String,
    pub relevant: bool,
    #[serde(default)]
    pub categories: BTreeSet<Category>,
    #[serde(default)]
    pub decided_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub stored: ReviewDecision,
    /// Consensus across annotators after this decision.
    pub consensus: ReviewDecision,
}

async fn submit_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<DecisionResponse>, ApiError> {
    let Json(req) = body?;
    let decision = ReviewDecision {
        article_id: id.clone(),
        annotator_id: req.annotator_id,
        relevant: req.relevant,
        categories: req.categories,
        decided_at: req.decided_at.unwrap_or_else(|| state.now()),
    };
    let mut store = state.store_mut();
    if store.article(&id).is_none() {
        return Err(ApiError::not_found(format!("article `{id}` not found")));
    }
    decision.validate().map_err(decision_error)?;
    if !store.predictions().iter().any(|p| p.article_id == id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_surfaced", format!("article `{id}` has not been scored")));
    }
    let stored = store.put_decision(decision)?;
    let consensus = store.latest_decision(&id)?.ok_or_else(|| ApiError::internal("decision not visible"))?;
    Ok(Json(DecisionResponse { stored, consensus }))
}

async fn score(
    State(state): State<AppState>,
    body: Result<Json<ScoreRequest>, JsonRejection>,
) -> Result<Json<ScoreResponse>, ApiError> {
    let Json(req) = body?;
    let now = state.now();
    let article = Article {
        id: "adhoc".into(),
        source: Source::Manual,
        url: "adhoc:".into(),
        language: req.language,
        title: req.title,
        body: req.body,
        published_at: now,
        fetched_at: now,
    };
    let scorer = state.0.scorer.clone();
    let result = tokio::task::spawn_blocking(move || scorer.score(&article))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    match result {
        Ok(p) => Ok(Json(ScoreResponse::from_scores(p.artifact_id, p.relevance_score, p.category_scores))),
        Err(e @ ScoreError::UnsupportedLanguage(_)) => Err(ApiError::validation("language", e.to_string())),
        Err(e) if e.is_retryable() => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "scorer_unavailable", e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::BAD_GATEWAY, "scorer_error", e.to_string())),
    }
}

fn default_window() -> u32 {
    14
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub language: Language,
    /// `min-precision` or `max-precision-at-min-recall`.
    pub mode: String,
    pub floor: f64,
    /// Days of traffic, ending now, to calibrate on.
    #[serde(default = "default_window")]
    pub window_days: u32,
    /// Write the selected threshold into the active policy.
    #[serde(default)]
    pub apply: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResponse {
    pub language: Language,
    pub selected: OperatingPoint,
    pub labeled: usize,
    pub applied: bool,
    pub policy_digest: String,
    pub summary: String,
}

async fn calibrate(
    State(state): State<AppState>,
    body: Result<Json<CalibrateRequest>, JsonRejection>,
) -> Result<Json<CalibrateResponse>, ApiError> {
    let Json(req) = body?;
    if !req.language.is_scored() {
        return Err(ApiError::validation("language", format!("`{}` is not on the scoring path", req.language)));
    }
    if !(0.0..=1.0).contains(&req.floor) {
        return Err(ApiError::validation("floor", "must be within [0, 1]"));
    }
    let mode = SelectionMode::parse(&req.mode, req.floor).map_err(|m| ApiError::validation("mode", m))?;
    if req.window_days == 0 {
        return Err(ApiError::validation("window_days", "must be positive"));
    }
    let artifact = state.active_artifact().ok_or_else(|| ApiError::not_found("no active artifact"))?;
    let now = state.now();
    let records = {
        let store = state.store();
        staging_records(&store, &artifact, Some(req.language), now - Duration::days(req.window_days.into()), now)
    };
    let labeled = records.iter().filter(|r| r.label.is_some()).count();
    let table = relevance_table(&records, Some(req.language), None, req.window_days, Estimator::Raw)
        .map_err(|e| ApiError::validation("window_days", e.to_string()))?;
    let point = match select_threshold(&table.points, mode) {
        Ok(p) => p,
        Err(SelectionError::EmptyTable) => {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_data", "no scored traffic in the window"))
        }
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "infeasible", e.to_string()).with_field("floor")),
    };
    let summary = render_selection(req.language.as_str(), mode, &point);
    let mut policy_digest = state.policy().digest();
    if req.apply {
        let mut policy = state.0.policy.write().unwrap_or_else(|e| e.into_inner());
        let mut next = policy.clone();
        next.relevance.insert(req.language, point.threshold);
        next.provenance.floors.retain(|f| !f.starts_with(&format!("{}:", req.language)));
        next.provenance.floors.push(format!("{}: {mode}", req.language));
        next.provenance.option = format!("service calibration at {}", now.format("%Y-%m-%dT%H:%M:%SZ"));
        persist_policy(&state, &next)?;
        policy_digest = next.digest();
        *policy = next;
    }
    Ok(Json(CalibrateResponse { language: req.language, selected: point, labeled, applied: req.apply, policy_digest, summary }))
}

fn persist_policy(state: &AppState, policy: &ThresholdPolicy) -> Result<(), ApiError> {
    if let Some(path) = &state.0.policy_path {
        policy.save(path).map_err(|e| ApiError::internal(e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MetricsParams {
    language: Option<Language>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionMetrics {
    pub artifact_id: Option<String>,
    pub buckets: Vec<MetricsBucket>,
    pub drift: DriftReport,
}

/// Monthly precision series and drift status for the active artifact.
pub fn precision_metrics_for(state: &AppState, language: Option<Language>) -> PrecisionMetrics {
    let artifact = state.active_artifact();
    let policy = state.policy();
    let mut buckets = match &artifact {
        Some(id) => bucket_metrics(&reviewed_items(&state.store(), id), &policy),
        None => Vec::new(),
    };
    if let Some(l) = language {
        buckets.retain(|b| b.language == l);
    }
    let drift = detect_drift(&buckets, state.0.drift_rule);
    PrecisionMetrics { artifact_id: artifact, buckets, drift }
}

async fn precision_metrics(
    State(state): State<AppState>,
    params: Result<Query<MetricsParams>, QueryRejection>,
) -> Result<Json<PrecisionMetrics>, ApiError> {
    let Query(params) = params?;
    Ok(Json(precision_metrics_for(&state, params.language)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsBody {
    pub policy: ThresholdPolicy,
    pub digest: String,
}

async fn get_thresholds(State(state): State<AppState>) -> Json<ThresholdsBody> {
    let policy = state.policy();
    Json(ThresholdsBody { digest: policy.digest(), policy })
}

async fn put_thresholds(
    State(state): State<AppState>,
    body: Result<Json<ThresholdPolicy>, JsonRejection>,
) -> Result<Json<ThresholdsBody>, ApiError> {
    let Json(next) = body?;
    next.validate().map_err(|e| match &e {
        PolicyError::Invalid { field, message } => ApiError::validation(field, message.clone()),
        PolicyError::Io(m) => ApiError::internal(m.clone()),
    })?;
    let mut policy = state.0.policy.write().unwrap_or_else(|e| e.into_inner());
    persist_policy(&state, &next)?;
    *policy = next.clone();
    Ok(Json(ThresholdsBody { digest: next.digest(), policy: next }))
}
