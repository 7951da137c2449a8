//! Background jobs with polling, cancellation and a per-model writer lock.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use spheretopic::training::{EpochRecord, TrainObserver};

use crate::error::{AppError, AppResult};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Train,
    Finetune,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    /// Allowed moves: queued -> running -> {done, failed, cancelled}, and
    /// queued -> cancelled.
    fn can_move_to(self, next: JobState) -> bool {
        match (self, next) {
            (JobState::Queued, JobState::Running) => true,
            (JobState::Queued, JobState::Cancelled) => true,
            (JobState::Running, s) => s.is_terminal(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub schema_version: u32,
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    pub model_id: String,
    /// Set when the job is done: the artifact it produced, e.g. `models/<id>`.
    pub result: Option<String>,
    /// Set when the job failed: `{"kind", "message", ...}` as in error responses.
    pub error: Option<serde_json::Value>,
}

struct Entry {
    record: JobRecord,
    cancel: Arc<AtomicBool>,
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, Entry>,
    /// Model id -> job currently holding it.
    busy: HashMap<String, String>,
    next: u64,
}

#[derive(Default)]
pub struct JobManager {
    inner: Mutex<Inner>,
    changed: Condvar,
}

/// Handed to the job body: progress reporting and cancellation polling.
pub struct JobContext {
    manager: Arc<JobManager>,
    id: String,
    cancel: Arc<AtomicBool>,
}

impl JobContext {
    pub fn set_progress(&self, fraction: f64) {
        self.manager.update(&self.id, |r| {
            if r.state == JobState::Running {
                r.progress = r.progress.max(fraction.clamp(0.0, 1.0));
            }
        });
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

impl TrainObserver for JobContext {
    fn on_epoch(&mut self, _record: &EpochRecord, fraction: f64) {
        self.set_progress(fraction);
    }

    fn cancelled(&self) -> bool {
        self.is_cancelled()
    }
}

impl JobManager {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        let mut inner = self.lock();
        if let Some(e) = inner.jobs.get_mut(id) {
            f(&mut e.record);
        }
        drop(inner);
        self.changed.notify_all();
    }

    fn transition(&self, id: &str, next: JobState, result: Option<String>, error: Option<serde_json::Value>) {
        let mut inner = self.lock();
        let Some(e) = inner.jobs.get_mut(id) else { return };
        if !e.record.state.can_move_to(next) {
            return;
        }
        e.record.state = next;
        if next == JobState::Done {
            e.record.progress = 1.0;
            e.record.result = result;
        }
        if error.is_some() {
            e.record.error = error;
        }
        if next.is_terminal() {
            let model = e.record.model_id.clone();
            if inner.busy.get(&model).map(String::as_str) == Some(id) {
                inner.busy.remove(&model);
            }
        }
        drop(inner);
        self.changed.notify_all();
    }

    /// True while a queued or running job holds the model.
    pub fn is_busy(&self, model_id: &str) -> bool {
        self.lock().busy.contains_key(model_id)
    }

    pub fn ensure_idle(&self, model_id: &str) -> AppResult<()> {
        if self.is_busy(model_id) {
            return Err(AppError::Busy(model_id.to_string()));
        }
        Ok(())
    }

    /// Registers a job holding `model_id` and runs `work` on its own thread.
    /// Fails with [`AppError::Busy`] if another job holds the model. The
    /// closure returns the result reference stored on success.
    pub fn submit<F>(self: &Arc<Self>, kind: JobKind, model_id: &str, work: F) -> AppResult<JobRecord>
    where
        F: FnOnce(&mut JobContext) -> AppResult<String> + Send + 'static,
    {
        let (record, cancel) = {
            let mut inner = self.lock();
            if inner.busy.contains_key(model_id) {
                return Err(AppError::Busy(model_id.to_string()));
            }
            inner.next += 1;
            let id = format!("job-{}", inner.next);
            let record = JobRecord {
                schema_version: SCHEMA_VERSION,
                id: id.clone(),
                kind,
                state: JobState::Queued,
                progress: 0.0,
                model_id: model_id.to_string(),
                result: None,
                error: None,
            };
            let cancel = Arc::new(AtomicBool::new(false));
            inner.busy.insert(model_id.to_string(), id.clone());
            inner.jobs.insert(
                id,
                Entry {
                    record: record.clone(),
                    cancel: cancel.clone(),
                },
            );
            (record, cancel)
        };
        let manager = self.clone();
        let id = record.id.clone();
        std::thread::spawn(move || {
            if cancel.load(Ordering::SeqCst) {
                return;
            }
            manager.transition(&id, JobState::Running, None, None);
            let mut ctx = JobContext {
                manager: manager.clone(),
                id: id.clone(),
                cancel,
            };
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&mut ctx)));
            match outcome {
                Ok(Ok(result)) => manager.transition(&id, JobState::Done, Some(result), None),
                Ok(Err(AppError::Core(spheretopic::Error::Cancelled))) => {
                    manager.transition(&id, JobState::Cancelled, None, None)
                }
                Ok(Err(e)) => manager.transition(&id, JobState::Failed, None, Some(e.to_json()["error"].take())),
                Err(_) => manager.transition(&id, JobState::Failed, None, Some(serde_json::json!({ "kind": "internal", "message": "job panicked" }))),
            }
        });
        Ok(record)
    }

    pub fn get(&self, id: &str) -> AppResult<JobRecord> {
        self.lock()
            .jobs
            .get(id)
            .map(|e| e.record.clone())
            .ok_or_else(|| AppError::not_found("job", id))
    }

    /// Requests cancellation. A queued job is cancelled at once; a running one
    /// stops at its next cancellation check, leaving earlier checkpoints as
    /// they were. Finished jobs are returned unchanged.
    pub fn cancel(&self, id: &str) -> AppResult<JobRecord> {
        let state = {
            let inner = self.lock();
            let e = inner.jobs.get(id).ok_or_else(|| AppError::not_found("job", id))?;
            e.cancel.store(true, Ordering::SeqCst);
            e.record.state
        };
        if state == JobState::Queued {
            self.transition(id, JobState::Cancelled, None, None);
        }
        self.get(id)
    }

    /// Blocks until the job reaches a terminal state or the timeout passes.
    pub fn wait(&self, id: &str, timeout: Duration) -> AppResult<JobRecord> {
        let deadline = std::time::Instant::now() + timeout;
        let mut inner = self.lock();
        loop {
            let rec = inner
                .jobs
                .get(id)
                .map(|e| e.record.clone())
                .ok_or_else(|| AppError::not_found("job", id))?;
            let now = std::time::Instant::now();
            if rec.state.is_terminal() || now >= deadline {
                return Ok(rec);
            }
            inner = self
                .changed
                .wait_timeout(inner, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}
