//! Full-batch gradient descent on logistic loss, with per-cell label masking
//! and a temporal train/test split.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer, DEFAULT_HASH_BITS};
use super::model::{sigmoid, Head, LinearScorer, HEAD_COUNT};
use crate::types::{digest_hex, Category, Language, ReviewDecision};

/// A category cell: annotated negative, annotated positive, or not annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryLabel {
    Negative,
    Positive,
    Masked,
}

impl CategoryLabel {
    fn target(self) -> Option<f64> {
        match self {
            CategoryLabel::Negative => Some(0.0),
            CategoryLabel::Positive => Some(1.0),
            CategoryLabel::Masked => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub language: Language,
    pub features: FeatureVector,
    pub relevant: bool,
    /// Indexed by [`Category::index`].
    pub categories: [CategoryLabel; 5],
}

impl LabeledExample {
    /// Build from a consensus decision. Categories in `masked` are not
    /// annotated for this example.
    pub fn from_decision(
        featurizer: &Featurizer,
        title: &str,
        body: &str,
        language: Language,
        decision: &ReviewDecision,
        masked: &[Category],
    ) -> Self {
        let categories = Category::ALL.map(|c| {
            if masked.contains(&c) {
                CategoryLabel::Masked
            } else if decision.categories.contains(&c) {
                CategoryLabel::Positive
            } else {
                CategoryLabel::Negative
            }
        });
        LabeledExample {
            id: decision.article_id.clone(),
            timestamp: decision.decided_at,
            language,
            features: featurizer.featurize(title, body),
            relevant: decision.relevant,
            categories,
        }
    }

    fn target(&self, head: usize) -> Option<f64> {
        if head == 0 {
            Some(if self.relevant { 1.0 } else { 0.0 })
        } else {
            self.categories[head - 1].target()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Recorded in the artifact header; weights start at zero.
    pub seed: u64,
    pub hash_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.5, epochs: 200, l2: 1e-4, seed: 0, hash_bits: DEFAULT_HASH_BITS }
    }
}

impl TrainConfig {
    pub fn digest(&self) -> String {
        digest_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("feature index {0} does not fit {1} hash bits")]
    FeatureOutOfRange(u32, u32),
    #[error("learning rate and l2 must be finite and non-negative")]
    BadConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Category heads with no unmasked cell; they stay at initialization.
    pub untrained: Vec<Category>,
    pub final_loss: [f64; HEAD_COUNT],
}

/// Hook for data augmentation (e.g. machine translation of English examples).
pub trait Augmenter {
    fn augment(&self, examples: &[LabeledExample]) -> Vec<LabeledExample>;
}

/// The default: no augmentation.
pub struct NoAugmentation;

impl Augmenter for NoAugmentation {
    fn augment(&self, _examples: &[LabeledExample]) -> Vec<LabeledExample> {
        Vec::new()
    }
}

pub fn train(examples: &[LabeledExample], config: &TrainConfig) -> Result<(LinearScorer, TrainReport), TrainError> {
    train_with(examples, config, &NoAugmentation)
}

pub fn train_with(
    examples: &[LabeledExample],
    config: &TrainConfig,
    augmenter: &dyn Augmenter,
) -> Result<(LinearScorer, TrainReport), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    if !(config.learning_rate.is_finite() && config.learning_rate >= 0.0 && config.l2.is_finite() && config.l2 >= 0.0) {
        return Err(TrainError::BadConfig);
    }
    let featurizer = Featurizer::new(config.hash_bits);
    let mut all = examples.to_vec();
    all.extend(augmenter.augment(examples));
    for ex in &all {
        if let Some(max) = ex.features.max_index() {
            if max as usize >= featurizer.dims() {
                return Err(TrainError::FeatureOutOfRange(max, config.hash_bits));
            }
        }
    }

    let mut report = TrainReport::default();
    let mut heads = Vec::with_capacity(HEAD_COUNT);
    let mut grad = vec![0.0; featurizer.dims()];
    for head_idx in 0..HEAD_COUNT {
        let mut head = Head::zeros(featurizer.dims());
        let rows: Vec<(&FeatureVector, f64)> =
            all.iter().filter_map(|ex| ex.target(head_idx).map(|y| (&ex.features, y))).collect();
        if rows.is_empty() {
            report.untrained.push(Category::ALL[head_idx - 1]);
            heads.push(head);
            continue;
        }
        let mut touched: Vec<u32> = rows.iter().flat_map(|(x, _)| x.entries().map(|(i, _)| i)).collect();
        touched.sort_unstable();
        touched.dedup();

        for _ in 0..config.epochs {
            let bias_grad = accumulate_gradient(&head, &rows, &mut grad);
            for &i in &touched {
                let i = i as usize;
                head.weights[i] -= config.learning_rate * (grad[i] + config.l2 * head.weights[i]);
                grad[i] = 0.0;
            }
            head.bias -= config.learning_rate * bias_grad;
        }
        report.final_loss[head_idx] = loss(&head, &rows, config.l2);
        heads.push(head);
    }
    Ok((LinearScorer::from_parts(featurizer, config.seed, heads), report))
}

/// Adds the data term of the mean logistic-loss gradient into `grad` and
/// returns the bias gradient. The l2 term is left to the caller.
fn accumulate_gradient(head: &Head, rows: &[(&FeatureVector, f64)], grad: &mut [f64]) -> f64 {
    let n = rows.len() as f64;
    let mut bias_grad = 0.0;
    for (x, y) in rows {
        let r = (sigmoid(head.logit(x)) - y) / n;
        for (i, c) in x.entries() {
            grad[i as usize] += r * c;
        }
        bias_grad += r;
    }
    bias_grad
}

fn log_sigmoid(z: f64) -> f64 {
    // log(1 / (1 + e^-z))
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn loss(head: &Head, rows: &[(&FeatureVector, f64)], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let data: f64 = rows
        .iter()
        .map(|(x, y)| {
            let z = head.logit(x);
            -(y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z))
        })
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * head.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Objective and full gradient (weights, bias) of one head over its unmasked
/// rows. `head_idx` 0 is relevance, `1 + c.index()` category `c`.
pub fn loss_and_gradient(head: &Head, examples: &[LabeledExample], head_idx: usize, l2: f64) -> (f64, Vec<f64>, f64) {
    let rows: Vec<(&FeatureVector, f64)> =
        examples.iter().filter_map(|ex| ex.target(head_idx).map(|y| (&ex.features, y))).collect();
    let mut grad = vec![0.0; head.weights.len()];
    if rows.is_empty() {
        return (0.0, grad, 0.0);
    }
    let bias_grad = accumulate_gradient(head, &rows, &mut grad);
    for (g, w) in grad.iter_mut().zip(&head.weights) {
        *g += l2 * w;
    }
    (loss(head, &rows, l2), grad, bias_grad)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least 2 examples, got {0}")]
    TooFew(usize),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
}

pub trait Timestamped {
    fn timestamp(&self) -> DateTime<Utc>;
    fn id(&self) -> &str;
}

impl Timestamped for LabeledExample {
    fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// Order by (timestamp, id) and cut after `round(fraction * n)` items, kept
/// within `1..n` so neither side is empty.
pub fn temporal_split<T: Timestamped>(mut items: Vec<T>, fraction: f64) -> Result<(Vec<T>, Vec<T>), SplitError> {
    let n = items.len();
    if n < 2 {
        return Err(SplitError::TooFew(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::Fraction(fraction));
    }
    items.sort_by(|a, b| a.timestamp().cmp(&b.timestamp()).then_with(|| a.id().cmp(b.id())));
    let cut = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let test = items.split_off(cut);
    Ok((items, test))
}
