//! Background loop: poll due connectors, score new articles, check drift.
//!
//! Runs on its own thread because store writes and the scorer are
//! blocking. Scoring happens outside the store lock; only the resulting
//! predictions are written under it.

use std::collections::HashSet;
use std::sync::atomic::Ordering;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use triage_core::classifier::ScoringReport;
use triage_core::ingest::{CursorStore, Scheduler, ScheduleError, SourceConnector};
use triage_core::store::StoreError;
use triage_core::types::Article;

use crate::api::{precision_metrics_for, AppState};
use crate::config::Schedule;

/// Articles scored per batch before their predictions are written.
const SCORE_BATCH: usize = 256;

pub struct JobHandle {
    stop: mpsc::Sender<()>,
    thread: JoinHandle<()>,
}

impl JobHandle {
    /// Stop after the current step and wait for the thread.
    pub fn shutdown(self) {
        let _ = self.stop.send(());
        let _ = self.thread.join();
    }
}

/// Score everything the active scorer has not seen yet.
pub fn score_new(state: &AppState) -> Result<ScoringReport, StoreError> {
    let scorer = state.0.scorer.clone();
    let mut report = ScoringReport::default();
    let pending: Vec<Article> = {
        let store = state.store();
        match scorer.artifact_id() {
            Some(id) => store.unscored(&id).into_iter().cloned().collect(),
            None => {
                let seen: HashSet<&str> = store.predictions().iter().map(|p| p.article_id.as_str()).collect();
                store
                    .articles()
                    .iter()
                    .filter(|a| a.language.is_scored() && !seen.contains(a.id.as_str()))
                    .cloned()
                    .collect()
            }
        }
    };
    for chunk in pending.chunks(SCORE_BATCH) {
        let mut scored = Vec::with_capacity(chunk.len());
        for article in chunk {
            match scorer.score(article) {
                Ok(p) => scored.push(p),
                Err(e) if e.is_retryable() => {
                    tracing::warn!(article = %article.id, error = %e, "scoring deferred");
                    report.deferred += 1;
                }
                Err(e) => {
                    tracing::warn!(article = %article.id, error = %e, "scoring failed");
                    report.failed += 1;
                }
            }
        }
        let mut store = state.store_mut();
        for p in scored {
            store.put_prediction(p)?;
            report.scored += 1;
        }
    }
    Ok(report)
}

fn step(state: &AppState, scheduler: &mut Scheduler) -> Result<(), ScheduleError> {
    let ingested = {
        let mut store = state.store_mut();
        scheduler.tick(&mut store)?
    };
    let scored = score_new(state)?;
    let total = ingested.total();
    if total.fetched > 0 || scored.scored > 0 {
        tracing::info!(fetched = total.fetched, stored = total.stored, scored = scored.scored, "scheduler step");
    }
    let drained = scheduler.drained() && scored.deferred == 0;
    state.0.drained.store(drained, Ordering::SeqCst);
    Ok(())
}

fn monitor(state: &AppState) {
    let metrics = precision_metrics_for(state, None);
    for alert in &metrics.drift.alerts {
        tracing::warn!("{}", alert.log_line());
    }
    tracing::info!(buckets = metrics.buckets.len(), alerts = metrics.drift.alerts.len(), "drift check");
}

/// Start the background loop over `connectors`.
pub fn spawn(
    state: AppState,
    connectors: Vec<Box<dyn SourceConnector>>,
    schedule: Schedule,
) -> Result<JobHandle, ScheduleError> {
    let cursors = CursorStore::for_store(&state.store())?;
    let mut scheduler = Scheduler::new(connectors, cursors)?;
    let (stop, stopped) = mpsc::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("triage-scheduler".into())
        .spawn(move || {
            let mut next_monitor = Instant::now() + schedule.monitor;
            loop {
                if let Err(e) = step(&state, &mut scheduler) {
                    tracing::error!(error = %e, "scheduler step failed");
                }
                if Instant::now() >= next_monitor {
                    monitor(&state);
                    next_monitor = Instant::now() + schedule.monitor;
                }
                let wait = if state.is_drained() { schedule.tick } else { schedule.tick.min(Duration::from_millis(50)) };
                match stopped.recv_timeout(wait) {
                    Err(RecvTimeoutError::Timeout) => {}
                    _ => break,
                }
            }
        })
        .expect("spawn scheduler thread");
    Ok(JobHandle { stop, thread })
}
