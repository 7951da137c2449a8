//! Labeled synthetic corpora with known topic-word distributions.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, StopWords};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub num_docs: usize,
    /// Distinct words drawn from each class topic.
    pub words_per_class: usize,
    /// Words of the shared background topic.
    pub background_words: usize,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    /// Expected token shares: own class topic, background, one other class.
    pub class_share: f64,
    pub background_share: f64,
    /// Stop words mixed into the text per document (removed by the vocabulary).
    pub stopwords_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            num_docs: 2000,
            words_per_class: 100,
            background_words: 100,
            min_doc_len: 30,
            max_doc_len: 60,
            class_share: 0.65,
            background_share: 0.25,
            stopwords_per_doc: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub docs: Vec<Document>,
    /// Per class, its topic's words sorted by descending generator weight.
    pub class_words: Vec<Vec<String>>,
    pub class_weights: Vec<Vec<f64>>,
    pub background: Vec<String>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gr", "kr", "pl", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "m"];

fn pronounceable<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    w
}

/// Weights proportional to `1 / (rank + 10)`, normalized.
fn flat_zipf(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|r| 1.0 / (r as f64 + 10.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.num_classes < 2 || config.num_docs == 0 || config.words_per_class == 0 {
        return Err(invalid("synthetic corpus needs >= 2 classes, documents and words"));
    }
    if config.min_doc_len == 0 || config.min_doc_len > config.max_doc_len {
        return Err(invalid("invalid document length range"));
    }
    let other_share = 1.0 - config.class_share - config.background_share;
    if config.class_share <= 0.0 || config.background_share < 0.0 || other_share < -1e-12 {
        return Err(invalid("token shares must be non-negative and sum to at most 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stop = StopWords::english();
    let needed = config.num_classes * config.words_per_class + config.background_words;
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(needed);
    while words.len() < needed {
        let w = pronounceable(&mut rng);
        if !stop.contains(&w) && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let class_words: Vec<Vec<String>> = (0..config.num_classes)
        .map(|c| words[c * config.words_per_class..(c + 1) * config.words_per_class].to_vec())
        .collect();
    let background = words[config.num_classes * config.words_per_class..].to_vec();
    let class_weights: Vec<Vec<f64>> = (0..config.num_classes).map(|_| flat_zipf(config.words_per_class)).collect();
    let class_dists: Vec<WeightedIndex<f64>> = class_weights
        .iter()
        .map(|w| WeightedIndex::new(w).expect("positive weights"))
        .collect();
    let bg_dist = (!background.is_empty()).then(|| WeightedIndex::new(flat_zipf(background.len())).expect("weights"));
    let fillers: Vec<&str> = ["the", "and", "of", "with", "from", "this", "that", "was"].to_vec();

    let mut labels: Vec<usize> = (0..config.num_docs).map(|d| d % config.num_classes).collect();
    labels.shuffle(&mut rng);
    let mut docs = Vec::with_capacity(config.num_docs);
    for (d, &label) in labels.iter().enumerate() {
        let len = rng.random_range(config.min_doc_len..=config.max_doc_len);
        let other = (label + rng.random_range(1..config.num_classes)) % config.num_classes;
        let mut tokens: Vec<&str> = Vec::with_capacity(len + config.stopwords_per_doc);
        for _ in 0..len {
            let u: f64 = rng.random();
            let w = if u < config.class_share {
                &class_words[label][class_dists[label].sample(&mut rng)]
            } else if u < config.class_share + config.background_share && bg_dist.is_some() {
                &background[bg_dist.as_ref().expect("checked").sample(&mut rng)]
            } else {
                &class_words[other][class_dists[other].sample(&mut rng)]
            };
            tokens.push(w);
        }
        for _ in 0..config.stopwords_per_doc {
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, fillers[rng.random_range(0..fillers.len())]);
        }
        let mut text = tokens.join(" ");
        text.push('.');
        docs.push(Document::labeled(format!("doc-{d:05}"), text, label));
    }
    Ok(SyntheticCorpus {
        docs,
        class_words,
        class_weights,
        background,
    })
}
