//! Document ingestion: tokenization, vocabulary filtering, bag-of-words
//! construction and keyword-group metadata.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{invalid, Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: Some(label),
        }
    }
}

/// Lowercase ASCII-letter tokens. Text is NFC-normalized first; every character
/// that is not an ASCII letter acts as a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.nfc() {
        if ch.is_ascii_alphabetic() {
            current.push(ch.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Checks the corpus-level document invariants: unique ids and non-blank text.
pub fn validate_documents(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::Input(format!("duplicate document id `{}`", doc.id)));
        }
        if doc.text.trim().is_empty() {
            return Err(Error::Input(format!("document `{}` has empty text", doc.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn english() -> Self {
        Self::from_words(ENGLISH_STOPWORDS.lines())
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One word per line, UTF-8.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_words(text.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabOptions {
    /// Words appearing in more than this fraction of documents are dropped.
    pub max_doc_frac: f64,
    /// Words with a corpus count below this are dropped.
    pub min_count: usize,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self {
            max_doc_frac: 0.15,
            min_count: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    total_count: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    total_count: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.doc_freq, r.total_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            doc_freq: v.doc_freq,
            total_count: v.total_count,
        }
    }
}

impl Vocabulary {
    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, total_count: Vec<usize>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            doc_freq,
            total_count,
        }
    }

    /// Vocabulary over the given words with zero statistics; mostly for tests.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = words.into_iter().map(Into::into).collect();
        let n = tokens.len();
        Self::from_parts(tokens, vec![0; n], vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn total_count(&self) -> &[usize] {
        &self.total_count
    }

    /// SHA-256 over the ordered token list; checkpoints record it.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex_digest(&hasher.finalize())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the vocabulary from raw documents.
pub fn build_vocabulary(
    docs: &[Document],
    stopwords: &StopWords,
    opts: VocabOptions,
) -> Result<Vocabulary> {
    let streams: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    build_vocabulary_from_tokens(&streams, stopwords, opts)
}

/// Same filters as [`build_vocabulary`] over pre-tokenized documents.
///
/// Thresholds are applied after stop-word removal. The document-frequency
/// limit is `max_doc_frac * streams.len()`; words strictly above it go.
pub fn build_vocabulary_from_tokens(
    streams: &[Vec<String>],
    stopwords: &StopWords,
    opts: VocabOptions,
) -> Result<Vocabulary> {
    if !(opts.max_doc_frac > 0.0 && opts.max_doc_frac <= 1.0) {
        return Err(invalid(format!(
            "max_doc_frac must lie in (0, 1], got {}",
            opts.max_doc_frac
        )));
    }
    if streams.is_empty() {
        return Err(Error::EmptyVocabulary("no documents".into()));
    }

    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for stream in streams {
        let mut seen: HashSet<&str> = HashSet::new();
        for tok in stream {
            if stopwords.contains(tok) {
                continue;
            }
            let entry = counts.entry(tok.as_str()).or_insert((0, 0));
            entry.1 += 1;
            if seen.insert(tok.as_str()) {
                entry.0 += 1;
            }
        }
    }

    let max_df = opts.max_doc_frac * streams.len() as f64;
    let mut tokens = Vec::new();
    let mut doc_freq = Vec::new();
    let mut total = Vec::new();
    for (word, (df, tc)) in counts {
        if df as f64 > max_df || tc < opts.min_count {
            continue;
        }
        tokens.push(word.to_string());
        doc_freq.push(df);
        total.push(tc);
    }
    if tokens.is_empty() {
        return Err(Error::EmptyVocabulary(
            "every word was removed by the stop-word, frequency or count filters".into(),
        ));
    }
    Ok(Vocabulary::from_parts(tokens, doc_freq, total))
}

/// Sparse count vector: `(vocab index, count)` pairs sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowRow {
    pub entries: Vec<(u32, u32)>,
}

impl BowRow {
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for i in indices {
            *map.entry(i as u32).or_insert(0) += 1;
        }
        Self {
            entries: map.into_iter().collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut v = vec![0.0; vocab_size];
        for &(i, c) in &self.entries {
            v[i as usize] = c as f64;
        }
        v
    }

    pub fn from_dense(counts: &[f64]) -> Self {
        Self {
            entries: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0.0)
                .map(|(i, &c)| (i as u32, c.round() as u32))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowMatrix {
    pub vocab_size: usize,
    pub rows: Vec<BowRow>,
    pub doc_ids: Vec<String>,
    pub labels: Vec<Option<usize>>,
    /// Ids of documents removed because no token survived filtering.
    pub dropped: Vec<String>,
}

impl BowMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Ground-truth labels when every kept document carries one.
    pub fn complete_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.complete_labels()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Restricts to the given row positions, in order.
    pub fn subset(&self, rows: &[usize]) -> BowMatrix {
        BowMatrix {
            vocab_size: self.vocab_size,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            doc_ids: rows.iter().map(|&r| self.doc_ids[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dropped: Vec::new(),
        }
    }
}

/// In-vocabulary token index streams, one per document (empty streams kept).
pub fn token_streams(docs: &[Document], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    docs.iter()
        .map(|d| {
            tokenize(&d.text)
                .iter()
                .filter_map(|t| vocab.get(t))
                .collect()
        })
        .collect()
}

pub fn to_bow(docs: &[Document], vocab: &Vocabulary) -> BowMatrix {
    let mut bow = BowMatrix {
        vocab_size: vocab.len(),
        rows: Vec::with_capacity(docs.len()),
        doc_ids: Vec::with_capacity(docs.len()),
        labels: Vec::with_capacity(docs.len()),
        dropped: Vec::new(),
    };
    for (doc, stream) in docs.iter().zip(token_streams(docs, vocab)) {
        if stream.is_empty() {
            bow.dropped.push(doc.id.clone());
            continue;
        }
        bow.rows.push(BowRow::from_indices(stream));
        bow.doc_ids.push(doc.id.clone());
        bow.labels.push(doc.label);
    }
    bow
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordGroup {
    pub name: String,
    pub keywords: Vec<String>,
}

/// Ordered seed-word groups; group `s` is intended for one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordGroups {
    pub groups: Vec<KeywordGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl KeywordGroups {
    /// Validates every keyword against the vocabulary. Overlapping groups are
    /// allowed and recorded as warnings.
    pub fn new(groups: Vec<KeywordGroup>, vocab: &Vocabulary) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("at least one keyword group is required"));
        }
        for g in &groups {
            if g.keywords.is_empty() {
                return Err(invalid(format!("keyword group `{}` is empty", g.name)));
            }
            for w in &g.keywords {
                if vocab.get(w).is_none() {
                    return Err(Error::UnknownKeyword { word: w.clone() });
                }
            }
        }
        let mut warnings = Vec::new();
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let shared: Vec<&String> = groups[a]
                    .keywords
                    .iter()
                    .filter(|w| groups[b].keywords.contains(w))
                    .collect();
                if !shared.is_empty() {
                    warnings.push(format!(
                        "groups `{}` and `{}` share keywords: {}",
                        groups[a].name,
                        groups[b].name,
                        shared
                            .iter()
                            .map(|s| s.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    ));
                }
            }
        }
        Ok(Self { groups, warnings })
    }

    pub fn from_lists(lists: &[&[&str]], vocab: &Vocabulary) -> Result<Self> {
        let groups = lists
            .iter()
            .enumerate()
            .map(|(i, words)| KeywordGroup {
                name: format!("group{i}"),
                keywords: words.iter().map(|w| w.to_string()).collect(),
            })
            .collect();
        Self::new(groups, vocab)
    }

    /// Reads the `[{"name": ..., "keywords": [...]}, ...]` file format.
    pub fn from_json_file(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let groups: Vec<KeywordGroup> = serde_json::from_str(&text)?;
        Self::new(groups, vocab)
    }

    pub fn to_json_list(&self) -> serde_json::Value {
        serde_json::to_value(&self.groups).expect("keyword groups serialize")
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Vocabulary indices per group, duplicates preserved.
    pub fn indices(&self, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
        self.groups
            .iter()
            .map(|g| {
                g.keywords
                    .iter()
                    .map(|w| {
                        vocab
                            .get(w)
                            .ok_or_else(|| Error::UnknownKeyword { word: w.clone() })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Seeded shuffle of `0..n` split into `ceil(frac * n)` (at least one) train
/// indices and the rest.
pub fn split_indices(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((frac * n as f64).ceil() as usize).clamp(1, n.max(1)).min(n);
    let test = order.split_off(n_train);
    (order, test)
}

/// Picks `k` seed words per class by class-level tf-idf on a seeded training
/// split: `tf(c, w) * ln(C / df(w))` where `tf` is the count of `w` in class
/// `c` and `df(w)` the number of classes whose training documents contain `w`.
/// Ties prefer the higher raw count, then the lower vocabulary index.
pub fn derive_keywords(
    docs: &[Document],
    vocab: &Vocabulary,
    k: usize,
    train_frac: f64,
    seed: u64,
) -> Result<KeywordGroups> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > vocab.len() {
        return Err(invalid(format!(
            "k = {k} exceeds the vocabulary size {}",
            vocab.len()
        )));
    }
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(invalid(format!("train_frac must lie in (0, 1], got {train_frac}")));
    }
    let labels: Vec<usize> = docs
        .iter()
        .map(|d| {
            d.label
                .ok_or_else(|| invalid(format!("document `{}` has no label", d.id)))
        })
        .collect::<Result<_>>()?;
    if labels.is_empty() {
        return Err(invalid("no labeled documents"));
    }
    let num_classes = labels.iter().max().unwrap() + 1;

    let (train, _) = split_indices(docs.len(), train_frac, seed);

    let mut tf = vec![vec![0usize; vocab.len()]; num_classes];
    for &d in &train {
        for tok in tokenize(&docs[d].text) {
            if let Some(i) = vocab.get(&tok) {
                tf[labels[d]][i] += 1;
            }
        }
    }
    let df: Vec<usize> = (0..vocab.len())
        .map(|w| tf.iter().filter(|row| row[w] > 0).count())
        .collect();

    let c = num_classes as f64;
    let mut groups = Vec::with_capacity(num_classes);
    for (class, row) in tf.iter().enumerate() {
        let mut scored: Vec<(usize, f64)> = (0..vocab.len())
            .filter(|&w| row[w] > 0)
            .map(|w| (w, row[w] as f64 * (c / df[w] as f64).ln()))
            .collect();
        if scored.len() < k {
            return Err(Error::EmptyClass { class });
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(row[b.0].cmp(&row[a.0]))
                .then(a.0.cmp(&b.0))
        });
        groups.push(KeywordGroup {
            name: format!("class{class}"),
            keywords: scored[..k]
                .iter()
                .map(|&(w, _)| vocab.token(w).to_string())
                .collect(),
        });
    }
    KeywordGroups::new(groups, vocab)
}

/// Reads JSONL documents with fields `id`, `text` and optional integer `label`.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    let mut docs = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("line {}: {e}", n + 1)))?;
        docs.push(doc);
    }
    validate_documents(&docs)?;
    Ok(docs)
}

/// Reads a two-column `text,label` CSV with a header row. Ids are `row-<n>`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Input(e.to_string()))?;
    let mut docs = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Input(e.to_string()))?;
        let text = record
            .get(0)
            .ok_or_else(|| Error::Input(format!("row {}: missing text column", n + 1)))?;
        let label = match record.get(1).map(str::trim) {
            None | Some("") => None,
            Some(l) => Some(l.parse::<usize>().map_err(|_| {
                Error::Input(format!("row {}: label `{l}` is not a class index", n + 1))
            })?),
        };
        docs.push(Document {
            id: format!("row-{}", n + 1),
            text: text.to_string(),
            label,
        });
    }
    validate_documents(&docs)?;
    Ok(docs)
}
