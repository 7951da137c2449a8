//! On-disk project layout. One directory per corpus and per model; no database.
//!
//! ```text
//! <root>/corpora/<corpus id>/corpus.json      CorpusMeta
//!                            documents.jsonl
//!                            vocab.json
//!                            bow.json
//!                            embeddings.bin   f64 rows, see `encode_embeddings`
//!                            embeddings.json  EmbeddingMeta
//! <root>/models/<model id>/model.json         ModelMeta
//!                          base.snap          stage-1 checkpoint
//!                          checkpoint.snap    latest completed checkpoint
//!                          keywords.json      current keyword groups
//!                          report.json        training report of the checkpoint
//!                          metrics.json
//! ```
//!
//! Ids are truncated SHA-256 digests of the inputs that determine the artifact.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spheretopic::corpus::{
    build_vocabulary, to_bow, token_streams, BowMatrix, Document, KeywordGroups, StopWords, VocabOptions,
    Vocabulary,
};
use spheretopic::embedding::{EmbeddingMatrix, SkipGramConfig};
use spheretopic::model::{ModelConfig, TopicModelState};
use spheretopic::snapshot;
use spheretopic::training::TrainConfig;
use spheretopic::transport::Matching;

use crate::error::{AppError, AppResult};
use crate::SCHEMA_VERSION;

const ID_LEN: usize = 16;

/// Hex SHA-256 of `bytes`, truncated to 16 characters.
pub fn digest(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    full.iter().map(|b| format!("{b:02x}")).collect::<String>()[..ID_LEN].to_string()
}

pub fn digest_json<T: Serialize>(value: &T) -> AppResult<String> {
    Ok(digest(&serde_json::to_vec(value)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub schema_version: u32,
    pub id: String,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub num_docs: usize,
    /// Documents with at least one in-vocabulary token.
    pub num_kept: usize,
    pub dropped: Vec<String>,
    pub num_classes: Option<usize>,
    pub vocab_options: VocabOptions,
    /// `english`, `file:<digest>` (CLI) or `list:<digest>` (HTTP).
    pub stopwords: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    Trained { config: SkipGramConfig, final_loss: Option<f64> },
    Imported { file: String, coverage: f64, missing: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub schema_version: u32,
    pub digest: String,
    pub rows: usize,
    pub dim: usize,
    pub source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema_version: u32,
    pub id: String,
    pub corpus_id: String,
    pub vocab_hash: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Keyword groups the current checkpoint was fine-tuned with.
    pub keywords: Option<KeywordGroups>,
    pub matching: Option<Matching>,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

pub struct LoadedCorpus {
    pub meta: CorpusMeta,
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
    pub bow: BowMatrix,
    pub streams: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp-{}-{n}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// `u64 rows, u64 dim` then row-major little-endian f64 values.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let v = m.vectors();
    let mut out = Vec::with_capacity(16 + 8 * v.len());
    out.extend_from_slice(&(v.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(v.ncols() as u64).to_le_bytes());
    for x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> AppResult<EmbeddingMatrix> {
    let bad = || AppError::BadRequest("corrupt embeddings file".into());
    if bytes.len() < 16 {
        return Err(bad());
    }
    let rows = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let dim = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if rows.checked_mul(dim).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(bad());
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let arr = Array2::from_shape_vec((rows, dim), values).map_err(|_| bad())?;
    Ok(EmbeddingMatrix::from_unit_rows(arr, 1e-9)?)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> AppResult<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("corpora"))?;
        std::fs::create_dir_all(root.join("models"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn corpus_dir(&self, id: &str) -> AppResult<PathBuf> {
        let dir = self.root.join("corpora").join(id);
        if !valid_id(id) || !dir.join("corpus.json").is_file() {
            return Err(AppError::not_found("corpus", id));
        }
        Ok(dir)
    }

    pub fn model_dir(&self, id: &str) -> AppResult<PathBuf> {
        if !valid_id(id) {
            return Err(AppError::not_found("model", id));
        }
        Ok(self.root.join("models").join(id))
    }

    /// Builds the vocabulary and bag-of-words and stores them. Preparing the
    /// same documents with the same options again returns the existing corpus.
    pub fn prepare(
        &self,
        docs: Vec<Document>,
        options: VocabOptions,
        stopwords: &StopWords,
        stopwords_tag: &str,
    ) -> AppResult<CorpusMeta> {
        spheretopic::corpus::validate_documents(&docs)?;
        let id = digest_json(&(&docs, &options, stopwords_tag))?;
        if let Ok(meta) = self.corpus_meta(&id) {
            return Ok(meta);
        }
        let vocab = build_vocabulary(&docs, stopwords, options)?;
        let bow = to_bow(&docs, &vocab);
        let meta = CorpusMeta {
            schema_version: SCHEMA_VERSION,
            id: id.clone(),
            vocab_hash: vocab.content_hash(),
            vocab_size: vocab.len(),
            num_docs: docs.len(),
            num_kept: bow.len(),
            dropped: bow.dropped.clone(),
            num_classes: bow.num_classes(),
            vocab_options: options,
            stopwords: stopwords_tag.to_string(),
        };
        let dir = self.root.join("corpora").join(&id);
        std::fs::create_dir_all(&dir)?;
        let mut jsonl = Vec::new();
        for d in &docs {
            serde_json::to_writer(&mut jsonl, d)?;
            jsonl.push(b'\n');
        }
        write_atomic(&dir.join("documents.jsonl"), &jsonl)?;
        write_json(&dir.join("vocab.json"), &vocab)?;
        write_json(&dir.join("bow.json"), &bow)?;
        // Written last: its presence marks the corpus as complete.
        write_json(&dir.join("corpus.json"), &meta)?;
        Ok(meta)
    }

    pub fn corpus_meta(&self, id: &str) -> AppResult<CorpusMeta> {
        read_json(&self.corpus_dir(id)?.join("corpus.json"))
    }

    pub fn load_corpus(&self, id: &str) -> AppResult<LoadedCorpus> {
        let dir = self.corpus_dir(id)?;
        let meta: CorpusMeta = read_json(&dir.join("corpus.json"))?;
        let docs = spheretopic::corpus::read_jsonl(dir.join("documents.jsonl"))?;
        let vocab: Vocabulary = read_json(&dir.join("vocab.json"))?;
        let bow: BowMatrix = read_json(&dir.join("bow.json"))?;
        let streams = token_streams(&docs, &vocab);
        Ok(LoadedCorpus {
            meta,
            docs,
            vocab,
            bow,
            streams,
        })
    }

    pub fn save_embeddings(&self, corpus_id: &str, m: &EmbeddingMatrix, source: EmbeddingSource) -> AppResult<EmbeddingMeta> {
        let dir = self.corpus_dir(corpus_id)?;
        let bytes = encode_embeddings(m);
        let meta = EmbeddingMeta {
            schema_version: SCHEMA_VERSION,
            digest: digest(&bytes),
            rows: m.len(),
            dim: m.dim(),
            source,
        };
        write_atomic(&dir.join("embeddings.bin"), &bytes)?;
        write_json(&dir.join("embeddings.json"), &meta)?;
        Ok(meta)
    }

    pub fn embedding_meta(&self, corpus_id: &str) -> AppResult<Option<EmbeddingMeta>> {
        let path = self.corpus_dir(corpus_id)?.join("embeddings.json");
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn load_embeddings(&self, corpus_id: &str) -> AppResult<Option<EmbeddingMatrix>> {
        let path = self.corpus_dir(corpus_id)?.join("embeddings.bin");
        if !path.is_file() {
            return Ok(None);
        }
        decode_embeddings(&std::fs::read(path)?).map(Some)
    }

    pub fn model_meta(&self, id: &str) -> AppResult<ModelMeta> {
        let path = self.model_dir(id)?.join("model.json");
        if !path.is_file() {
            return Err(AppError::not_found("model", id));
        }
        read_json(&path)
    }

    pub fn model_exists(&self, id: &str) -> bool {
        self.model_meta(id).is_ok()
    }

    pub fn write_model_meta(&self, meta: &ModelMeta) -> AppResult<()> {
        let dir = self.model_dir(&meta.id)?;
        std::fs::create_dir_all(&dir)?;
        write_json(&dir.join("model.json"), meta)
    }

    pub fn save_checkpoint(&self, model_id: &str, name: &str, state: &TopicModelState) -> AppResult<()> {
        let dir = self.model_dir(model_id)?;
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(format!("{name}.snap")), &snapshot::to_bytes(state)?)
    }

    /// Loads a checkpoint, rejecting it unless it was trained on `vocab_hash`.
    pub fn load_checkpoint(&self, model_id: &str, name: &str, vocab_hash: &str) -> AppResult<TopicModelState> {
        let path = self.model_dir(model_id)?.join(format!("{name}.snap"));
        if !path.is_file() {
            return Err(AppError::not_found("checkpoint", format!("{model_id}/{name}")));
        }
        Ok(snapshot::load_for_vocab(path, vocab_hash)?)
    }

    pub fn checkpoint_bytes(&self, model_id: &str, name: &str) -> AppResult<Vec<u8>> {
        let path = self.model_dir(model_id)?.join(format!("{name}.snap"));
        std::fs::read(&path).map_err(|_| AppError::not_found("checkpoint", format!("{model_id}/{name}")))
    }

    pub fn write_model_file<T: Serialize>(&self, model_id: &str, file: &str, value: &T) -> AppResult<()> {
        let dir = self.model_dir(model_id)?;
        std::fs::create_dir_all(&dir)?;
        write_json(&dir.join(file), value)
    }

    pub fn read_model_file<T: DeserializeOwned>(&self, model_id: &str, file: &str) -> AppResult<Option<T>> {
        let path = self.model_dir(model_id)?.join(file);
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Document> {
        (0..30)
            .map(|i| {
                let text = if i % 2 == 0 { "apple banana cherry apple" } else { "delta echo foxtrot echo" };
                Document::labeled(format!("d{i}"), text, i % 2)
            })
            .collect()
    }

    fn options() -> VocabOptions {
        VocabOptions {
            max_doc_frac: 1.0,
            min_count: 1,
        }
    }

    #[test]
    fn prepare_is_idempotent_and_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let a = store.prepare(docs(), options(), &StopWords::none(), "none").unwrap();
        let b = store.prepare(docs(), options(), &StopWords::none(), "none").unwrap();
        assert_eq!(a, b);
        let c = store.load_corpus(&a.id).unwrap();
        assert_eq!(c.vocab.content_hash(), a.vocab_hash);
        assert_eq!(c.bow.len(), 30);
        assert_eq!(a.num_classes, Some(2));
    }

    #[test]
    fn unknown_and_malformed_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        assert!(matches!(store.corpus_meta("abc"), Err(AppError::NotFound { .. })));
        assert!(matches!(store.corpus_meta("../x"), Err(AppError::NotFound { .. })));
        assert!(matches!(store.model_meta("../../etc"), Err(AppError::NotFound { .. })));
    }

    #[test]
    fn embeddings_round_trip_exactly() {
        let m = EmbeddingMatrix::random(7, 5, 3).unwrap();
        let back = decode_embeddings(&encode_embeddings(&m)).unwrap();
        assert_eq!(back.vectors(), m.vectors());
        assert!(decode_embeddings(&encode_embeddings(&m)[..30]).is_err());
    }
    #[test]
    fn checkpoints_round_trip_and_reject_other_vocabularies() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let config = ModelConfig {
            num_topics: 3,
            hidden_sizes: vec![8],
            embedding_dim: 4,
            ..ModelConfig::default()
        };
        let emb = EmbeddingMatrix::random(12, 4, 1).unwrap();
        let state = TopicModelState::new(config, emb, "0123456789abcdef").unwrap();
        let id = "00000000000000aa";
        store.save_checkpoint(id, "checkpoint", &state).unwrap();
        let first = store.checkpoint_bytes(id, "checkpoint").unwrap();
        let loaded = store.load_checkpoint(id, "checkpoint", "0123456789abcdef").unwrap();
        store.save_checkpoint(id, "again", &loaded).unwrap();
        assert_eq!(store.checkpoint_bytes(id, "again").unwrap(), first);

        let err = store.load_checkpoint(id, "checkpoint", "fedcba9876543210").unwrap_err();
        assert_eq!(err.kind(), "vocab_mismatch");
        assert_eq!(err.status(), 400);
        assert!(matches!(store.load_checkpoint(id, "missing", "x"), Err(AppError::NotFound { .. })));
    }
}
