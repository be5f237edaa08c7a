//! Core of the news-event triage pipeline: corpus store, ingestion,
//! scoring, threshold calibration, shadow evaluation and monitoring.

pub mod calibration;
pub mod classifier;
pub mod ingest;
pub mod monitor;
pub mod ratio;
pub mod shadow;
pub mod store;
pub mod synth;
pub mod types;

pub use types::{Article, Category, Language, ModelArtifact, Prediction, ReviewDecision, Source, Stage};
