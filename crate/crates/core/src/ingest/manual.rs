use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{derive_id, RawArticle};
use crate::store::{PutOutcome, Store, StoreError};
use crate::types::Source;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum UploadOutcome {
    Stored,
    DuplicateUrl,
    DuplicateContent,
    Rejected { reason: String },
}

impl From<PutOutcome> for UploadOutcome {
    fn from(p: PutOutcome) -> Self {
        match p {
            PutOutcome::Stored => UploadOutcome::Stored,
            PutOutcome::DuplicateUrl => UploadOutcome::DuplicateUrl,
            PutOutcome::DuplicateContent => UploadOutcome::DuplicateContent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualOutcome {
    pub index: usize,
    pub id: Option<String>,
    #[serde(flatten)]
    pub outcome: UploadOutcome,
}

/// Store expert-uploaded records. Source is forced to MANUAL and ids are
/// assigned here; a bad record is reported without aborting the batch.
pub fn manual_upload(store: &mut Store, records: &[&str], now: DateTime<Utc>) -> Result<Vec<ManualOutcome>, StoreError> {
    let mut out = Vec::with_capacity(records.len());
    for (index, text) in records.iter().enumerate() {
        let raw: RawArticle = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => {
                out.push(ManualOutcome { index, id: None, outcome: UploadOutcome::Rejected { reason: e.to_string() } });
                continue;
            }
        };
        let mut raw = raw;
        raw.source = Some(Source::Manual);
        raw.id = Some(derive_id(Source::Manual, &raw.url));
        let article = raw.into_article(Source::Manual, now);
        let id = Some(article.id.clone());
        let outcome = match store.put_article(article) {
            Ok(p) => p.into(),
            Err(e @ StoreError::Io { .. }) => return Err(e),
            Err(e) => UploadOutcome::Rejected { reason: e.to_string() },
        };
        out.push(ManualOutcome { index, id, outcome });
    }
    Ok(out)
}
