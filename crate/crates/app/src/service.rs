//! Operations shared by the CLI and the HTTP service.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spheretopic::corpus::{read_csv, read_jsonl, Document, KeywordGroup, KeywordGroups, Vocabulary};
use spheretopic::embedding::{load_embeddings, train_spherical, EmbeddingMatrix, SkipGramConfig};
use spheretopic::evaluation::{
    ablation_sweep, evaluate, AblationPoint, AblationTable, EvalData, MetricSelection, RunMetrics, TopicSummary,
};
use spheretopic::model::{doc_topic_proportions, TopicModelState};
use spheretopic::snapshot;
use spheretopic::training::{finetune_keywords, train_unsupervised, EpochRecord, TrainConfig, TrainObserver};
use spheretopic::transport::Matching;

use crate::config::AppConfig;
use crate::error::{AppError, AppResult};
use crate::store::{digest, digest_json, EmbeddingSource, LoadedCorpus, ModelMeta, ProjectStore};
use crate::SCHEMA_VERSION;

/// Reads `.jsonl`/`.json` (one document per line) or `.csv` (`text,label`).
pub fn read_documents(path: &Path) -> AppResult<Vec<Document>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Ok(read_jsonl(path)?),
        Some("csv") => Ok(read_csv(path)?),
        _ => Err(AppError::Usage(format!(
            "{}: expected a .jsonl or .csv corpus",
            path.display()
        ))),
    }
}

/// Reads a keyword-groups file: a JSON list of `{name, keywords}`.
pub fn read_keyword_file(path: &Path) -> AppResult<Vec<KeywordGroup>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::BadRequest(format!("{}: {e}", path.display())))
}

/// Validates groups against the vocabulary and the topic count.
pub fn validate_keywords(groups: Vec<KeywordGroup>, vocab: &Vocabulary, num_topics: usize) -> AppResult<KeywordGroups> {
    let groups = KeywordGroups::new(groups, vocab)?;
    if groups.len() != num_topics {
        return Err(AppError::BadRequest(format!(
            "{} keyword groups for {num_topics} topics; one group per topic is required",
            groups.len()
        )));
    }
    Ok(groups)
}

/// Maps a sub-range of overall progress onto an inner observer.
struct Scaled<'a> {
    inner: &'a mut dyn TrainObserver,
    offset: f64,
    scale: f64,
}

impl TrainObserver for Scaled<'_> {
    fn on_epoch(&mut self, record: &EpochRecord, fraction: f64) {
        self.inner.on_epoch(record, self.offset + self.scale * fraction);
    }

    fn cancelled(&self) -> bool {
        self.inner.cancelled()
    }
}

fn check_cancel(observer: &dyn TrainObserver) -> AppResult<()> {
    if observer.cancelled() {
        return Err(spheretopic::Error::Cancelled.into());
    }
    Ok(())
}

/// Returns stored embeddings, training and storing them first if absent.
pub fn ensure_embeddings(store: &ProjectStore, corpus: &LoadedCorpus, config: &SkipGramConfig) -> AppResult<EmbeddingMatrix> {
    if let Some(m) = store.load_embeddings(&corpus.meta.id)? {
        return Ok(m);
    }
    train_embeddings(store, corpus, config)
}

pub fn train_embeddings(store: &ProjectStore, corpus: &LoadedCorpus, config: &SkipGramConfig) -> AppResult<EmbeddingMatrix> {
    let (m, report) = train_spherical(&corpus.streams, corpus.vocab.len(), config)?;
    store.save_embeddings(
        &corpus.meta.id,
        &m,
        EmbeddingSource::Trained {
            config: config.clone(),
            final_loss: report.epoch_losses.last().copied(),
        },
    )?;
    Ok(m)
}

pub fn import_embeddings(store: &ProjectStore, corpus: &LoadedCorpus, path: &Path, dim: usize, seed: u64) -> AppResult<EmbeddingMatrix> {
    let loaded = load_embeddings(path, &corpus.vocab, dim, seed)?;
    store.save_embeddings(
        &corpus.meta.id,
        &loaded.matrix,
        EmbeddingSource::Imported {
            file: path.display().to_string(),
            coverage: loaded.coverage,
            missing: loaded.missing.len(),
        },
    )?;
    Ok(loaded.matrix)
}

/// A validated training request; `model_id` is fixed before any work starts.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub model_id: String,
    pub corpus_id: String,
    pub config: AppConfig,
    pub keywords: Option<KeywordGroups>,
}

pub fn plan_training(
    store: &ProjectStore,
    corpus_id: &str,
    config: &AppConfig,
    keywords: Option<Vec<KeywordGroup>>,
) -> AppResult<TrainPlan> {
    config.validate()?;
    let corpus = store.load_corpus(corpus_id)?;
    let keywords = keywords
        .map(|g| validate_keywords(g, &corpus.vocab, config.model.num_topics))
        .transpose()?;
    let embedding_id = match store.embedding_meta(corpus_id)? {
        Some(m) => {
            if m.dim != config.model.embedding_dim {
                return Err(AppError::BadRequest(format!(
                    "stored embeddings have dimension {}, model.embedding_dim is {}",
                    m.dim, config.model.embedding_dim
                )));
            }
            m.digest
        }
        None => digest_json(&config.embedding)?,
    };
    let groups = keywords.as_ref().map(|k| &k.groups);
    let model_id = digest_json(&(corpus_id, &embedding_id, &config.model, &config.train, groups))?;
    Ok(TrainPlan {
        model_id,
        corpus_id: corpus_id.to_string(),
        config: config.clone(),
        keywords,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub model_id: String,
    pub seed: u64,
    pub metrics: RunMetrics,
}

fn compute_metrics(
    model_id: &str,
    state: &TopicModelState,
    corpus: &LoadedCorpus,
    matching: Option<&Matching>,
    select: MetricSelection,
    seed: u64,
) -> AppResult<MetricsRecord> {
    let data = EvalData {
        bow: &corpus.bow,
        streams: &corpus.streams,
        vocab: &corpus.vocab,
    };
    Ok(MetricsRecord {
        schema_version: SCHEMA_VERSION,
        model_id: model_id.to_string(),
        seed,
        metrics: evaluate(state, &data, matching, select, seed)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn commit(
    store: &ProjectStore,
    meta: &ModelMeta,
    state: &TopicModelState,
    corpus: &LoadedCorpus,
    report: &spheretopic::training::TrainReport,
    observer: &dyn TrainObserver,
) -> AppResult<()> {
    let metrics = compute_metrics(&meta.id, state, corpus, meta.matching.as_ref(), MetricSelection::default(), meta.train.seed)?;
    check_cancel(observer)?;
    store.save_checkpoint(&meta.id, "checkpoint", state)?;
    store.write_model_file(&meta.id, "report.json", report)?;
    store.write_model_file(&meta.id, "metrics.json", &metrics)?;
    store.write_model_meta(meta)
}

/// Stage 1, then stage 2 if the plan has keywords. Stage 2 always starts from
/// the stored stage-1 checkpoint so later fine-tunes are reproducible.
pub fn run_training(store: &ProjectStore, plan: &TrainPlan, observer: &mut dyn TrainObserver) -> AppResult<ModelMeta> {
    let corpus = store.load_corpus(&plan.corpus_id)?;
    let cfg = &plan.config;
    let emb = ensure_embeddings(store, &corpus, &cfg.embedding)?;
    check_cancel(observer)?;
    let share = match plan.keywords {
        Some(_) => cfg.train.max_epochs as f64 / (cfg.train.max_epochs + cfg.train.stage2_epochs) as f64,
        None => 1.0,
    };
    let (state, mut report) = train_unsupervised(
        &corpus.bow,
        &emb,
        &cfg.model,
        &cfg.train,
        &corpus.meta.vocab_hash,
        &mut Scaled {
            inner: observer,
            offset: 0.0,
            scale: share,
        },
    )?;
    let base = snapshot::from_bytes(&snapshot::to_bytes(&state)?)?;
    let (state, matching) = match &plan.keywords {
        Some(groups) => {
            let (next, r2) = finetune_keywords(
                &base,
                &corpus.bow,
                groups,
                &corpus.vocab,
                &cfg.train,
                &mut Scaled {
                    inner: observer,
                    offset: share,
                    scale: 1.0 - share,
                },
            )?;
            report.epochs.extend(r2.epochs);
            report.stage2_seconds = r2.stage2_seconds;
            report.transport = r2.transport;
            report.matching = r2.matching.clone();
            (next, r2.matching)
        }
        None => (base.clone(), None),
    };
    check_cancel(observer)?;
    let meta = ModelMeta {
        schema_version: SCHEMA_VERSION,
        id: plan.model_id.clone(),
        corpus_id: plan.corpus_id.clone(),
        vocab_hash: corpus.meta.vocab_hash.clone(),
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        keywords: plan.keywords.clone(),
        matching,
        stage1_seconds: report.stage1_seconds,
        stage2_seconds: report.stage2_seconds,
    };
    store.save_checkpoint(&meta.id, "base", &base)?;
    if let Some(k) = &plan.keywords {
        store.write_model_file(&meta.id, "keywords.json", k)?;
    }
    commit(store, &meta, &state, &corpus, &report, observer)?;
    Ok(meta)
}

/// Keyword groups a fine-tune would use: the edited set if any, else the
/// groups of the current checkpoint.
pub fn current_keywords(store: &ProjectStore, meta: &ModelMeta) -> AppResult<Option<KeywordGroups>> {
    match store.read_model_file::<KeywordGroups>(&meta.id, "keywords.json")? {
        Some(k) => Ok(Some(k)),
        None => Ok(meta.keywords.clone()),
    }
}

/// Checks that a fine-tune can start: a stage-1 checkpoint and valid keywords.
pub fn plan_finetune(store: &ProjectStore, model_id: &str) -> AppResult<(ModelMeta, KeywordGroups)> {
    let meta = store.model_meta(model_id)?;
    store.checkpoint_bytes(model_id, "base")?;
    let keywords = current_keywords(store, &meta)?
        .ok_or_else(|| AppError::BadRequest(format!("model `{model_id}` has no keyword groups; PUT them first")))?;
    Ok((meta, keywords))
}

/// Reruns stage 2 from the stage-1 checkpoint with the current keywords. The
/// checkpoint is replaced only when the run completes.
pub fn run_finetune(
    store: &ProjectStore,
    model_id: &str,
    train: Option<TrainConfig>,
    observer: &mut dyn TrainObserver,
) -> AppResult<ModelMeta> {
    let (mut meta, keywords) = plan_finetune(store, model_id)?;
    let corpus = store.load_corpus(&meta.corpus_id)?;
    let keywords = validate_keywords(keywords.groups, &corpus.vocab, meta.model.num_topics)?;
    let base = store.load_checkpoint(model_id, "base", &meta.vocab_hash)?;
    let train = train.unwrap_or_else(|| meta.train.clone());
    let (state, report) = finetune_keywords(&base, &corpus.bow, &keywords, &corpus.vocab, &train, observer)?;
    check_cancel(observer)?;
    meta.keywords = Some(keywords);
    meta.matching = report.matching.clone();
    meta.train = train;
    meta.stage2_seconds = report.stage2_seconds;
    commit(store, &meta, &state, &corpus, &report, observer)?;
    Ok(meta)
}

pub fn set_keywords(store: &ProjectStore, model_id: &str, groups: Vec<KeywordGroup>) -> AppResult<KeywordGroups> {
    let meta = store.model_meta(model_id)?;
    let corpus = store.load_corpus(&meta.corpus_id)?;
    let groups = validate_keywords(groups, &corpus.vocab, meta.model.num_topics)?;
    store.write_model_file(model_id, "keywords.json", &groups)?;
    Ok(groups)
}

/// Latest completed checkpoint with its metadata and corpus.
pub fn load_model(store: &ProjectStore, model_id: &str) -> AppResult<(ModelMeta, LoadedCorpus, TopicModelState)> {
    let meta = store.model_meta(model_id)?;
    let corpus = store.load_corpus(&meta.corpus_id)?;
    let state = store.load_checkpoint(model_id, "checkpoint", &corpus.meta.vocab_hash)?;
    Ok((meta, corpus, state))
}

pub fn evaluate_model(store: &ProjectStore, model_id: &str, select: MetricSelection, seed: u64) -> AppResult<MetricsRecord> {
    let (meta, corpus, state) = load_model(store, model_id)?;
    let record = compute_metrics(model_id, &state, &corpus, meta.matching.as_ref(), select, seed)?;
    if select == MetricSelection::default() {
        store.write_model_file(model_id, "metrics.json", &record)?;
    }
    Ok(record)
}

/// Stored metrics of the latest checkpoint, computed on first request.
pub fn model_metrics(store: &ProjectStore, model_id: &str) -> AppResult<MetricsRecord> {
    if let Some(m) = store.read_model_file::<MetricsRecord>(model_id, "metrics.json")? {
        return Ok(m);
    }
    let meta = store.model_meta(model_id)?;
    evaluate_model(store, model_id, MetricSelection::default(), meta.train.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicView {
    pub topic: usize,
    pub words: Vec<String>,
    pub probs: Vec<f64>,
    /// Name of the keyword group matched to this topic.
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsView {
    pub schema_version: u32,
    pub model_id: String,
    pub vocab_hash: String,
    pub topics: Vec<TopicView>,
    pub matching: Option<Matching>,
    pub keywords: Option<KeywordGroups>,
}

pub fn topics(store: &ProjectStore, model_id: &str, top: usize) -> AppResult<TopicsView> {
    let (meta, corpus, state) = load_model(store, model_id)?;
    if top == 0 {
        return Err(AppError::BadRequest("top must be >= 1".into()));
    }
    let summary = TopicSummary::from_state(&state, &corpus.vocab, top.min(corpus.vocab.len()));
    let names: Option<Vec<String>> = meta
        .keywords
        .as_ref()
        .map(|k| k.groups.iter().map(|g| g.name.clone()).collect());
    let topics = summary
        .topics
        .into_iter()
        .enumerate()
        .map(|(t, w)| TopicView {
            topic: t,
            words: w.words,
            probs: w.probs,
            group: match (&meta.matching, &names) {
                (Some(m), Some(n)) => n.get(m.assignment[t]).cloned(),
                _ => None,
            },
        })
        .collect();
    Ok(TopicsView {
        schema_version: SCHEMA_VERSION,
        model_id: model_id.to_string(),
        vocab_hash: meta.vocab_hash,
        topics,
        matching: meta.matching,
        keywords: meta.keywords,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub id: String,
    pub score: f64,
    pub label: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentsView {
    pub schema_version: u32,
    pub model_id: String,
    pub topic: usize,
    pub documents: Vec<DocumentScore>,
}

/// Documents with the largest proportion `z_topic`, highest first.
pub fn top_documents(store: &ProjectStore, model_id: &str, topic: usize, limit: usize) -> AppResult<DocumentsView> {
    let (_, corpus, state) = load_model(store, model_id)?;
    if topic >= state.num_topics() {
        return Err(AppError::BadRequest(format!(
            "topic {topic} out of range; the model has {} topics",
            state.num_topics()
        )));
    }
    let z = doc_topic_proportions(&state, &corpus.bow.rows)?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b][topic].total_cmp(&z[a][topic]).then(a.cmp(&b)));
    let texts: HashMap<&str, &str> = corpus.docs.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let documents = order
        .into_iter()
        .take(limit)
        .map(|i| {
            let id = &corpus.bow.doc_ids[i];
            DocumentScore {
                id: id.clone(),
                score: z[i][topic],
                label: corpus.bow.labels[i],
                text: texts.get(id.as_str()).map(|t| t.to_string()).unwrap_or_default(),
            }
        })
        .collect();
    Ok(DocumentsView {
        schema_version: SCHEMA_VERSION,
        model_id: model_id.to_string(),
        topic,
        documents,
    })
}

pub fn ablate(
    store: &ProjectStore,
    corpus_id: &str,
    config: &AppConfig,
    grid: &[AblationPoint],
    seeds: &[u64],
) -> AppResult<AblationTable> {
    config.validate()?;
    let corpus = store.load_corpus(corpus_id)?;
    let emb = ensure_embeddings(store, &corpus, &config.embedding)?;
    let data = EvalData {
        bow: &corpus.bow,
        streams: &corpus.streams,
        vocab: &corpus.vocab,
    };
    Ok(ablation_sweep(grid, &config.model, &config.train, &emb, &data, seeds)?)
}

/// Digest of a file's bytes, used to tag user-supplied stop-word lists.
pub fn file_tag(path: &Path) -> AppResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("file:{}", digest(&bytes)))
}
