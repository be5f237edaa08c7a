//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Where an article came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[serde(alias = "GDELT")]
    Gdelt,
    #[serde(alias = "NEWSAPI")]
    Newsapi,
    #[serde(alias = "OSAC")]
    Osac,
    #[serde(alias = "MANUAL")]
    Manual,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Gdelt, Source::Newsapi, Source::Osac, Source::Manual];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gdelt => "gdelt",
            Source::Newsapi => "newsapi",
            Source::Osac => "osac",
            Source::Manual => "manual",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gdelt" => Ok(Source::Gdelt),
            "newsapi" => Ok(Source::Newsapi),
            "osac" => Ok(Source::Osac),
            "manual" => Ok(Source::Manual),
            _ => Err(ParseEnumError { kind: "source", value: s.to_owned() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[serde(alias = "EN")]
    En,
    #[serde(alias = "FR")]
    Fr,
    #[serde(alias = "AR")]
    Ar,
    #[serde(alias = "OTHER")]
    Other,
}

impl Language {
    /// Languages on the scoring path.
    pub const SCORED: [Language; 3] = [Language::En, Language::Fr, Language::Ar];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::Ar => "ar",
            Language::Other => "other",
        }
    }

    pub fn is_scored(self) -> bool {
        self != Language::Other
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "fr" | "french" => Ok(Language::Fr),
            "ar" | "arabic" => Ok(Language::Ar),
            "other" => Ok(Language::Other),
            _ => Err(ParseEnumError { kind: "language", value: s.to_owned() }),
        }
    }
}

/// Humanitarian-impact category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    #[serde(alias = "FOOD_SECURITY")]
    FoodSecurity,
    #[serde(alias = "AID_SECURITY")]
    AidSecurity,
    #[serde(alias = "EDUCATION")]
    Education,
    #[serde(alias = "HEALTH")]
    Health,
    #[serde(alias = "PROTECTION")]
    Protection,
}

impl Category {
    /// Fixed head order used by the scorer and its serialized weights.
    pub const ALL: [Category; 5] = [
        Category::FoodSecurity,
        Category::AidSecurity,
        Category::Education,
        Category::Health,
        Category::Protection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::FoodSecurity => "food_security",
            Category::AidSecurity => "aid_security",
            Category::Education => "education",
            Category::Health => "health",
            Category::Protection => "protection",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.to_ascii_lowercase().replace('-', "_");
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == lowered)
            .ok_or_else(|| ParseEnumError { kind: "category", value: s.to_owned() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

/// One ingested news item. Serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub source: Source,
    pub url: String,
    pub language: Language,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub published_at: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
}

impl Article {
    /// 64-bit digest of the NFC-normalized, whitespace-collapsed title and body.
    pub fn content_hash(&self) -> u64 {
        content_hash(&self.title, &self.body)
    }
}

pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn content_hash(title: &str, body: &str) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(normalize_text(title).as_bytes());
    // unit separator keeps ("ab", "c") and ("a", "bc") apart
    hasher.write(&[0x1f]);
    hasher.write(normalize_text(body).as_bytes());
    hasher.finish()
}

/// Stable 64-bit digest of arbitrary bytes, hex encoded.
pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    format!("{:016x}", hasher.finish())
}

/// A single annotator's judgement on one article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub article_id: String,
    pub annotator_id: String,
    pub relevant: bool,
    #[serde(default)]
    pub categories: BTreeSet<Category>,
    pub decided_at: DateTime<Utc>,
}

impl ReviewDecision {
    /// Categories may only be assigned to relevant articles.
    pub fn validate(&self) -> Result<(), DecisionError> {
        if self.article_id.trim().is_empty() {
            return Err(DecisionError::EmptyField("article_id"));
        }
        if self.annotator_id.trim().is_empty() {
            return Err(DecisionError::EmptyField("annotator_id"));
        }
        if !self.relevant && !self.categories.is_empty() {
            return Err(DecisionError::CategoriesWithoutRelevance);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecisionError {
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("categories assigned to an article marked not relevant")]
    CategoriesWithoutRelevance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[serde(alias = "STAGING")]
    Staging,
    #[serde(alias = "PROD")]
    Prod,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Staging => "staging",
            Stage::Prod => "prod",
        })
    }
}

impl FromStr for Stage {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "staging" => Ok(Stage::Staging),
            "prod" | "production" => Ok(Stage::Prod),
            _ => Err(ParseEnumError { kind: "stage", value: s.to_owned() }),
        }
    }
}

/// Metadata for a published scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub artifact_id: String,
    pub stage: Stage,
    pub created_at: DateTime<Utc>,
    pub config_digest: String,
    /// Path of the weights file, relative to the store root.
    pub weights_ref: String,
}

/// Relevance plus per-category scores for one article under one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub article_id: String,
    pub artifact_id: String,
    pub relevance_score: f64,
    /// Indexed by [`Category::index`].
    pub category_scores: [f64; 5],
    pub scored_at: DateTime<Utc>,
}

impl Prediction {
    pub fn category_score(&self, category: Category) -> f64 {
        self.category_scores[category.index()]
    }
}

/// Round half away from zero to `decimals` places.
pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}
