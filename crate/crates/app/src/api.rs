//! JSON-over-HTTP service. See `docs/api.md` for the schemas.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spheretopic::corpus::{Document, KeywordGroup, StopWords, VocabOptions};
use spheretopic::embedding::SkipGramConfig;
use spheretopic::evaluation::MetricSelection;
use spheretopic::model::ModelConfig;
use spheretopic::training::TrainConfig;

use crate::config::AppConfig;
use crate::error::{AppError, AppResult};
use crate::jobs::{JobKind, JobManager};
use crate::service;
use crate::store::{digest_json, ProjectStore};
use crate::SCHEMA_VERSION;

pub const MAX_DOCUMENT_LIMIT: usize = 1000;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ProjectStore>,
    pub jobs: Arc<JobManager>,
    /// Defaults for sections a request leaves out.
    pub config: Arc<AppConfig>,
}

impl AppState {
    pub fn new(store: ProjectStore, config: AppConfig) -> Self {
        Self {
            store: Arc::new(store),
            jobs: JobManager::new(),
            config: Arc::new(config),
        }
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.to_json())).into_response()
    }
}

fn respond<T: Serialize>(status: StatusCode, value: &T) -> AppResult<Response> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(m) => {
            m.entry("schema_version").or_insert(json!(SCHEMA_VERSION));
        }
        other => v = json!({ "schema_version": SCHEMA_VERSION, "data": other.take() }),
    }
    Ok((status, Json(v)).into_response())
}

/// JSON body whose parse failures are 400s in the service's error schema.
/// An empty body parses as `{}`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = AppError;

    async fn from_request(req: Request, state: &S) -> Result<Self, AppError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| AppError::BadRequest(e.body_text()))?;
        let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(bytes)
            .map(Body)
            .map_err(|e| AppError::BadRequest(format!("invalid request body: {e}")))
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> AppResult<T> {
    q.map(|Query(v)| v).map_err(|e| AppError::BadRequest(e.body_text()))
}

async fn blocking<T, F>(f: F) -> AppResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> AppResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::Io(std::io::Error::other(e.to_string())))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/corpora", post(create_corpus))
        .route("/corpora/{id}", get(get_corpus))
        .route("/models", post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/topics", get(get_topics))
        .route("/models/{id}/documents", get(get_documents))
        .route("/models/{id}/metrics", get(get_metrics))
        .route("/models/{id}/keywords", put(put_keywords).get(get_keywords))
        .route("/models/{id}/finetune", post(finetune))
        .route("/models/{id}/evaluate", post(evaluate))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .fallback(|| async { AppError::not_found("route", "").into_response() })
        .with_state(state)
}

async fn health() -> AppResult<Response> {
    respond(StatusCode::OK, &json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRequest {
    documents: Vec<Document>,
    #[serde(default)]
    vocab: Option<VocabOptions>,
    /// Replaces the built-in English list when present.
    #[serde(default)]
    stopwords: Option<Vec<String>>,
}

async fn create_corpus(State(app): State<AppState>, Body(req): Body<CorpusRequest>) -> AppResult<Response> {
    let defaults = app.config.vocab;
    let meta = blocking(move || {
        let (stop, tag) = match &req.stopwords {
            None => (StopWords::english(), "english".to_string()),
            Some(words) => {
                let mut sorted = words.clone();
                sorted.sort();
                (StopWords::from_words(words.iter().map(String::as_str)), format!("list:{}", digest_json(&sorted)?))
            }
        };
        app.store.prepare(req.documents, req.vocab.unwrap_or(defaults), &stop, &tag)
    })
    .await?;
    respond(StatusCode::CREATED, &meta)
}

async fn get_corpus(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    let meta = blocking(move || app.store.corpus_meta(&id)).await?;
    respond(StatusCode::OK, &meta)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRequest {
    corpus_id: String,
    #[serde(default)]
    model: Option<ModelConfig>,
    #[serde(default)]
    train: Option<TrainConfig>,
    #[serde(default)]
    embedding: Option<SkipGramConfig>,
    #[serde(default)]
    keywords: Option<Vec<KeywordGroup>>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn create_model(State(app): State<AppState>, Body(req): Body<ModelRequest>) -> AppResult<Response> {
    let mut config = (*app.config).clone();
    if let Some(m) = req.model {
        config.model = m;
    }
    if let Some(t) = req.train {
        config.train = t;
    }
    if let Some(e) = req.embedding {
        config.embedding = e;
    }
    let config = config.with_seed(req.seed);
    let store = app.store.clone();
    let plan = blocking(move || service::plan_training(&store, &req.corpus_id, &config, req.keywords)).await?;
    let store = app.store.clone();
    let model_id = plan.model_id.clone();
    let job = app.jobs.submit(JobKind::Train, &model_id, move |ctx| {
        service::run_training(&store, &plan, ctx).map(|m| format!("models/{}", m.id))
    })?;
    respond(StatusCode::ACCEPTED, &job)
}

async fn get_model(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    let busy = app.jobs.is_busy(&id);
    let meta = blocking(move || app.store.model_meta(&id)).await?;
    let mut v = serde_json::to_value(&meta)?;
    v["busy"] = json!(busy);
    respond(StatusCode::OK, &v)
}

#[derive(Deserialize)]
struct TopicsQuery {
    #[serde(default = "default_top")]
    top: usize,
}

fn default_top() -> usize {
    10
}

async fn get_topics(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<TopicsQuery>, QueryRejection>,
) -> AppResult<Response> {
    let q = query(q)?;
    let view = blocking(move || service::topics(&app.store, &id, q.top)).await?;
    respond(StatusCode::OK, &view)
}

#[derive(Deserialize)]
struct DocumentsQuery {
    topic: usize,
    #[serde(default = "default_top")]
    limit: usize,
}

async fn get_documents(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DocumentsQuery>, QueryRejection>,
) -> AppResult<Response> {
    let q = query(q)?;
    if q.limit == 0 || q.limit > MAX_DOCUMENT_LIMIT {
        return Err(AppError::BadRequest(format!("limit must lie in 1..={MAX_DOCUMENT_LIMIT}")));
    }
    let view = blocking(move || service::top_documents(&app.store, &id, q.topic, q.limit)).await?;
    respond(StatusCode::OK, &view)
}

async fn get_metrics(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    let m = blocking(move || service::model_metrics(&app.store, &id)).await?;
    respond(StatusCode::OK, &m)
}

async fn get_keywords(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    let model_id = id.clone();
    let groups = blocking(move || {
        let meta = app.store.model_meta(&id)?;
        service::current_keywords(&app.store, &meta)
    })
    .await?;
    respond(StatusCode::OK, &json!({ "model_id": model_id, "keywords": groups }))
}

async fn put_keywords(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(groups): Body<Vec<KeywordGroup>>,
) -> AppResult<Response> {
    app.jobs.ensure_idle(&id)?;
    let model_id = id.clone();
    let groups = blocking(move || service::set_keywords(&app.store, &id, groups)).await?;
    respond(StatusCode::OK, &json!({ "model_id": model_id, "keywords": groups }))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FinetuneRequest {
    #[serde(default)]
    train: Option<TrainConfig>,
}

async fn finetune(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<FinetuneRequest>,
) -> AppResult<Response> {
    if let Some(t) = &req.train {
        t.validate()?;
    }
    app.jobs.ensure_idle(&id)?;
    let store = app.store.clone();
    let check_id = id.clone();
    blocking(move || service::plan_finetune(&store, &check_id).map(|_| ())).await?;
    let store = app.store.clone();
    let model_id = id.clone();
    let job = app.jobs.submit(JobKind::Finetune, &id, move |ctx| {
        service::run_finetune(&store, &model_id, req.train, ctx).map(|m| format!("models/{}", m.id))
    })?;
    respond(StatusCode::ACCEPTED, &job)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    #[serde(default)]
    metrics: Option<MetricSelection>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn evaluate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<EvaluateRequest>,
) -> AppResult<Response> {
    app.jobs.ensure_idle(&id)?;
    let store = app.store.clone();
    let check_id = id.clone();
    let meta = blocking(move || store.model_meta(&check_id)).await?;
    let store = app.store.clone();
    let model_id = id.clone();
    let select = req.metrics.unwrap_or_default();
    let seed = req.seed.unwrap_or(meta.train.seed);
    let job = app.jobs.submit(JobKind::Evaluate, &id, move |_| {
        service::evaluate_model(&store, &model_id, select, seed).map(|_| format!("models/{model_id}/metrics"))
    })?;
    respond(StatusCode::ACCEPTED, &job)
}

async fn get_job(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    respond(StatusCode::OK, &app.jobs.get(&id)?)
}

async fn cancel_job(State(app): State<AppState>, Path(id): Path<String>) -> AppResult<Response> {
    respond(StatusCode::OK, &app.jobs.cancel(&id)?)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: &str, state: AppState) -> AppResult<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await?;
    Ok(())
}
