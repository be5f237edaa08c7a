use chrono::Utc;

use super::features::{FeatureVector, Featurizer};
use crate::types::{digest_hex, Article, Category, Language, Prediction};

const MAGIC: &[u8; 4] = b"TRLS";
pub const FORMAT_VERSION: u32 = 1;
/// Relevance head followed by one head per category.
pub const HEAD_COUNT: usize = 1 + Category::ALL.len();

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("language `{0}` is not on the scoring path")]
    UnsupportedLanguage(Language),
    #[error("scorer timed out: {0}")]
    Timeout(String),
    #[error("scorer unreachable: {0}")]
    Transport(String),
    #[error("malformed scorer response: {0}")]
    Malformed(String),
    #[error("no recorded score for article `{0}`")]
    Missing(String),
}

impl ScoreError {
    /// Retryable failures leave the article unscored for the next pass.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ScoreError::Timeout(_) | ScoreError::Transport(_))
    }
}

/// Anything that turns an article into a [`Prediction`].
pub trait Scorer: Send + Sync {
    /// Identifier stamped on predictions, if known before scoring.
    fn artifact_id(&self) -> Option<String>;

    fn score(&self, article: &Article) -> Result<Prediction, ScoreError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Head {
    pub fn zeros(dims: usize) -> Self {
        Head { weights: vec![0.0; dims], bias: 0.0 }
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        self.bias + x.entries().map(|(i, c)| self.weights[i as usize] * c).sum::<f64>()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactFormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("weights file truncated")]
    Truncated,
    #[error("dimension {0} is not a power of two")]
    Dims(u64),
}

/// Logistic scorer over hashed n-gram features: one relevance head and five
/// category heads sharing a vocabulary across languages.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub(crate) featurizer: Featurizer,
    pub(crate) seed: u64,
    /// `heads[0]` is relevance, `heads[1 + c.index()]` category `c`.
    pub heads: Vec<Head>,
    artifact_id: String,
}

impl LinearScorer {
    pub fn zeros(bits: u32, seed: u64) -> Self {
        let featurizer = Featurizer::new(bits);
        let heads = (0..HEAD_COUNT).map(|_| Head::zeros(featurizer.dims())).collect();
        Self::from_parts(featurizer, seed, heads)
    }

    pub(crate) fn from_parts(featurizer: Featurizer, seed: u64, heads: Vec<Head>) -> Self {
        let mut s = LinearScorer { featurizer, seed, heads, artifact_id: String::new() };
        s.artifact_id = format!("lin-{}", digest_hex(&s.to_bytes()));
        s
    }

    pub fn featurizer(&self) -> Featurizer {
        self.featurizer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> &str {
        &self.artifact_id
    }

    pub fn relevance_head(&self) -> &Head {
        &self.heads[0]
    }

    pub fn category_head(&self, c: Category) -> &Head {
        &self.heads[1 + c.index()]
    }

    /// (relevance, categories) for already featurized text.
    pub fn score_features(&self, x: &FeatureVector) -> (f64, [f64; 5]) {
        let relevance = sigmoid(self.heads[0].logit(x));
        let categories = Category::ALL.map(|c| sigmoid(self.category_head(c).logit(x)));
        (relevance, categories)
    }

    /// Layout, all little-endian:
    /// `"TRLS"`, version `u32`, dims `u64`, seed `u64`, head count `u32`,
    /// then per head: bias `f64` followed by `dims` weights `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.featurizer.dims();
        let mut out = Vec::with_capacity(28 + self.heads.len() * (dims + 1) * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(dims as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.heads.len() as u32).to_le_bytes());
        for h in &self.heads {
            out.extend_from_slice(&h.bias.to_le_bytes());
            for w in &h.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactFormatError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ArtifactFormatError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ArtifactFormatError::Version(version));
        }
        let dims = r.u64()?;
        if !dims.is_power_of_two() || !(2..=1 << 30).contains(&dims) {
            return Err(ArtifactFormatError::Dims(dims));
        }
        let seed = r.u64()?;
        let head_count = r.u32()? as usize;
        if head_count != HEAD_COUNT {
            return Err(ArtifactFormatError::Truncated);
        }
        let mut heads = Vec::with_capacity(head_count);
        for _ in 0..head_count {
            let bias = r.f64()?;
            let raw = r.take(dims as usize * 8)?;
            let weights = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            heads.push(Head { weights, bias });
        }
        let featurizer = Featurizer::new(dims.trailing_zeros());
        Ok(Self::from_parts(featurizer, seed, heads))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactFormatError> {
        let end = self.pos.checked_add(n).ok_or(ArtifactFormatError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(ArtifactFormatError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ArtifactFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ArtifactFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ArtifactFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Scorer for LinearScorer {
    fn artifact_id(&self) -> Option<String> {
        Some(self.artifact_id.clone())
    }

    fn score(&self, article: &Article) -> Result<Prediction, ScoreError> {
        if !article.language.is_scored() {
            return Err(ScoreError::UnsupportedLanguage(article.language));
        }
        let x = self.featurizer.featurize(&article.title, &article.body);
        let (relevance_score, category_scores) = self.score_features(&x);
        Ok(Prediction {
            article_id: article.id.clone(),
            artifact_id: self.artifact_id.clone(),
            relevance_score,
            category_scores,
            scored_at: Utc::now(),
        })
    }
}
