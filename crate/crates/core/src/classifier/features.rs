//! Hashed bag of word unigrams and bigrams.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

pub const DEFAULT_HASH_BITS: u32 = 20;

/// Sparse feature counts. Unigram and bigram entries are kept apart so the
/// token count stays recoverable even when their hashed indices collide.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// (index, count), sorted by index.
    pub unigrams: Vec<(u32, u32)>,
    pub bigrams: Vec<(u32, u32)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty() && self.bigrams.is_empty()
    }

    pub fn token_count(&self) -> u64 {
        self.unigrams.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    /// All (index, count) entries; an index may appear twice.
    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.unigrams
            .iter()
            .chain(&self.bigrams)
            .map(|&(i, c)| (i, f64::from(c)))
    }

    pub fn unigram_count(&self, index: u32) -> u32 {
        self.unigrams
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0, |pos| self.unigrams[pos].1)
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries().map(|(i, _)| i).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    bits: u32,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer { bits: DEFAULT_HASH_BITS }
    }
}

impl Featurizer {
    pub fn new(bits: u32) -> Self {
        assert!((1..=30).contains(&bits), "hash bits must be in 1..=30");
        Featurizer { bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dims(&self) -> usize {
        1 << self.bits
    }

    pub fn unigram_index(&self, token: &str) -> u32 {
        self.hash(&[b"u", token.as_bytes()])
    }

    pub fn bigram_index(&self, first: &str, second: &str) -> u32 {
        self.hash(&[b"b", first.as_bytes(), b" ", second.as_bytes()])
    }

    fn hash(&self, parts: &[&[u8]]) -> u32 {
        let mut h = FnvHasher::default();
        for (i, p) in parts.iter().enumerate() {
            if i == 1 {
                h.write(&[0x1f]);
            }
            h.write(p);
        }
        (h.finish() & ((1u64 << self.bits) - 1)) as u32
    }

    pub fn featurize(&self, title: &str, body: &str) -> FeatureVector {
        let mut unigrams = BTreeMap::new();
        let mut bigrams = BTreeMap::new();
        for field in [title, body] {
            let toks = tokens(field);
            for t in &toks {
                *unigrams.entry(self.unigram_index(t)).or_insert(0u32) += 1;
            }
            for pair in toks.windows(2) {
                *bigrams.entry(self.bigram_index(&pair[0], &pair[1])).or_insert(0u32) += 1;
            }
        }
        FeatureVector {
            unigrams: unigrams.into_iter().collect(),
            bigrams: bigrams.into_iter().collect(),
        }
    }
}

/// NFC-normalized, lowercased word tokens.
pub fn tokens(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.unicode_words().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_empty_vector() {
        let v = Featurizer::default().featurize("", "");
        assert!(v.is_empty());
        assert_eq!(v.token_count(), 0);
    }

    #[test]
    fn repeated_token_counts() {
        let f = Featurizer::default();
        let v = f.featurize("attack attack", "");
        assert_eq!(v.unigram_count(f.unigram_index("attack")), 2);
        assert_eq!(v.token_count(), 2);
        assert_eq!(v.bigrams, vec![(f.bigram_index("attack", "attack"), 1)]);
    }

    #[test]
    fn nfc_and_nfd_agree() {
        let f = Featurizer::default();
        let composed = "\u{c9}cole attaqu\u{e9}e";
        let decomposed = "E\u{301}cole attaque\u{301}e";
        assert_ne!(composed, decomposed);
        let nfc_a: String = composed.nfc().collect();
        let nfc_b: String = decomposed.nfc().collect();
        assert_eq!(nfc_a, nfc_b);
        assert_eq!(f.featurize(composed, ""), f.featurize(decomposed, ""));
    }

    #[test]
    fn punctuation_splits_and_case_folds() {
        assert_eq!(tokens("Clinic, SHELLED; (Gaza)"), ["clinic", "shelled", "gaza"]);
        assert_eq!(tokens("هجوم على مستشفى"), ["هجوم", "على", "مستشفى"]);
    }

    #[test]
    fn indices_stay_in_range() {
        let f = Featurizer::new(4);
        let v = f.featurize("a b c d e f g h i j k l m n o p", "q r s");
        assert!(v.max_index().unwrap() < 16);
        assert_eq!(v.token_count(), 19);
    }
}
