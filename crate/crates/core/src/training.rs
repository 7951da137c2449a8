//! Two-stage optimization: unsupervised training to convergence, then a short
//! keyword-guided stage driven by entropic OT (or plain cross-entropy).

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BowMatrix, BowRow, KeywordGroups, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, Error, Result};
use crate::model::{
    loss_and_gradients, topic_word_matrix, Guidance, LossParts, LossWeights, ModelConfig, NoiseMode, Params,
    TopicModelState,
};
use crate::transport::{
    cost_matrix_from_indices, greedy_min_cost_matching, ot_loss, sinkhorn_uniform, Matching,
    SinkhornOptions, TransportDiagnostics,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Starting (and stage-2) learning rate.
    pub lr: f64,
    /// Peak of the one-cycle schedule.
    pub max_lr: f64,
    /// Fraction of scheduled steps spent warming up.
    pub pct_start: f64,
    pub batch_size: usize,
    /// Epoch cap for stage 1; the one-cycle schedule spans this many epochs.
    pub max_epochs: usize,
    /// Stop stage 1 when the relative loss improvement over `patience`
    /// epochs falls below this.
    pub convergence_tol: f64,
    pub patience: usize,
    pub kl_weight: f64,
    pub alpha: f64,
    pub entropy_sign: f64,
    pub delta: f64,
    pub stage2_epochs: usize,
    pub sinkhorn: SinkhornOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            max_lr: 0.01,
            pct_start: 0.3,
            batch_size: 256,
            max_epochs: 50,
            convergence_tol: 1e-4,
            patience: 3,
            kl_weight: 1.0,
            alpha: 1.0,
            entropy_sign: 1.0,
            delta: 1.0,
            stage2_epochs: 5,
            sinkhorn: SinkhornOptions::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lr", self.lr), ("max_lr", self.max_lr)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(invalid("batch_size, max_epochs and patience must be positive"));
        }
        if !(0.0..1.0).contains(&self.pct_start) {
            return Err(invalid("pct_start must lie in [0, 1)"));
        }
        for (name, v) in [("alpha", self.alpha), ("delta", self.delta), ("kl_weight", self.kl_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if self.entropy_sign != 1.0 && self.entropy_sign != -1.0 {
            return Err(invalid("entropy_sign must be 1 or -1"));
        }
        Ok(())
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            kl: self.kl_weight,
            alpha: self.alpha,
            entropy_sign: self.entropy_sign,
            delta: self.delta,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(like: &Params) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// One-cycle learning rate: cosine warm-up from `initial` to `max` over the
/// first `pct_start` of the steps, then cosine annealing to `initial / 1e4`.
#[derive(Debug, Clone, Copy)]
pub struct OneCycle {
    pub initial: f64,
    pub max: f64,
    pub total_steps: usize,
    pub pct_start: f64,
}

impl OneCycle {
    pub fn lr(&self, step: usize) -> f64 {
        let warm = ((self.total_steps as f64 * self.pct_start).round() as usize).max(1);
        let min = self.initial / 1e4;
        let cos = |from: f64, to: f64, frac: f64| to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        if step < warm {
            cos(self.initial, self.max, step as f64 / warm as f64)
        } else {
            let rest = (self.total_steps.saturating_sub(warm)).max(1);
            cos(self.max, min, ((step - warm) as f64 / rest as f64).min(1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Unsupervised,
    Guided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub entropy: f64,
    pub guidance: f64,
    pub total: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
    /// Whether stage 1 met the relative-improvement rule before its cap.
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching: Option<Matching>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportDiagnostics>,
}

impl TrainReport {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            epochs: Vec::new(),
            stage1_seconds: 0.0,
            stage2_seconds: 0.0,
            converged: false,
            matching: None,
            transport: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Progress hooks for long-running jobs.
pub trait TrainObserver {
    /// Called after every epoch with the overall completed fraction.
    fn on_epoch(&mut self, _record: &EpochRecord, _fraction: f64) {}
    /// Polled between optimizer steps; `true` aborts with [`Error::Cancelled`].
    fn cancelled(&self) -> bool {
        false
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// How stage 2 turns the keyword cost matrix into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    /// Entropic OT, plan recomputed every step.
    Transport,
    /// Cross-entropy against a greedy matching fixed after stage 1.
    CrossEntropy,
}

fn check_inputs(bow: &BowMatrix, emb: &EmbeddingMatrix) -> Result<()> {
    if bow.is_empty() {
        return Err(invalid("no documents to train on"));
    }
    if bow.vocab_size != emb.len() {
        return Err(invalid(format!(
            "bag-of-words width {} differs from embedding rows {}",
            bow.vocab_size,
            emb.len()
        )));
    }
    Ok(())
}

struct EpochTotals {
    parts: LossParts,
    docs: usize,
}

impl EpochTotals {
    fn new() -> Self {
        Self {
            parts: LossParts::default(),
            docs: 0,
        }
    }

    fn add(&mut self, p: &LossParts, n: usize) {
        let w = n as f64;
        self.parts.recon += w * p.recon;
        self.parts.kl += w * p.kl;
        self.parts.entropy += w * p.entropy;
        self.parts.guidance += w * p.guidance;
        self.parts.total += w * p.total;
        self.docs += n;
    }

    fn record(&self, stage: Stage, epoch: usize, lr: f64, seconds: f64) -> EpochRecord {
        let d = self.docs.max(1) as f64;
        EpochRecord {
            stage,
            epoch,
            recon: self.parts.recon / d,
            kl: self.parts.kl / d,
            entropy: self.parts.entropy / d,
            guidance: self.parts.guidance / d,
            total: self.parts.total / d,
            lr,
            seconds,
        }
    }
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size).map(|c| c.to_vec()).collect()
}

fn diverged(epoch: usize, record: &EpochRecord) -> Option<Error> {
    (!record.total.is_finite()).then(|| Error::Diverged {
        epoch,
        reason: format!("non-finite loss {record:?}"),
    })
}

fn map_nonfinite(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { context, detail } => Error::Diverged {
            epoch,
            reason: format!("{context}: {detail}"),
        },
        other => other,
    }
}

/// Stage 1 only: fits the unsupervised objective from a fresh initialization.
pub fn train_unsupervised(
    bow: &BowMatrix,
    embeddings: &EmbeddingMatrix,
    model: &ModelConfig,
    config: &TrainConfig,
    vocab_hash: &str,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    config.validate()?;
    check_inputs(bow, embeddings)?;
    let mut state = TopicModelState::new(model.clone(), embeddings.clone(), vocab_hash)?;
    let mut report = TrainReport::new(config.seed);
    run_stage1(&mut state, bow, config, &mut report, observer, 1.0)?;
    Ok((state, report))
}

fn run_stage1(
    state: &mut TopicModelState,
    bow: &BowMatrix,
    config: &TrainConfig,
    report: &mut TrainReport,
    observer: &mut dyn TrainObserver,
    progress_share: f64,
) -> Result<()> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let per_epoch = bow.len().div_ceil(config.batch_size);
    let schedule = OneCycle {
        initial: config.lr,
        max: config.max_lr,
        total_steps: per_epoch * config.max_epochs,
        pct_start: config.pct_start,
    };
    let mut adam = Adam::new(&state.params);
    let weights = LossWeights {
        delta: 0.0,
        ..config.weights()
    };
    let mut step = 0;
    let mut history: Vec<f64> = Vec::new();
    for epoch in 0..config.max_epochs {
        let epoch_start = Instant::now();
        let mut totals = EpochTotals::new();
        let mut lr = config.lr;
        for batch in batches(bow.len(), config.batch_size, &mut rng) {
            if observer.cancelled() {
                return Err(Error::Cancelled);
            }
            let rows: Vec<&BowRow> = batch.iter().map(|&i| &bow.rows[i]).collect();
            let res = loss_and_gradients(state, &rows, NoiseMode::Sample(&mut rng), &weights, None)
                .map_err(|e| map_nonfinite(e, epoch))?;
            lr = schedule.lr(step);
            adam.step(&mut state.params, &res.grads, lr);
            state.check_finite("parameters after optimizer step").map_err(|e| map_nonfinite(e, epoch))?;
            totals.add(&res.parts, rows.len());
            step += 1;
        }
        let record = totals.record(Stage::Unsupervised, epoch, lr, epoch_start.elapsed().as_secs_f64());
        if let Some(e) = diverged(epoch, &record) {
            return Err(e);
        }
        history.push(record.total);
        report.epochs.push(record.clone());
        observer.on_epoch(&record, progress_share * (epoch + 1) as f64 / config.max_epochs as f64);
        if history.len() > config.patience {
            let old = history[history.len() - 1 - config.patience];
            let new = *history.last().expect("non-empty");
            if (old - new) / old.abs().max(1e-12) < config.convergence_tol {
                report.converged = true;
                break;
            }
        }
    }
    report.stage1_seconds = start.elapsed().as_secs_f64();
    Ok(())
}

fn resolve_groups(groups: &KeywordGroups, vocab: &Vocabulary, state_hash: &str, num_topics: usize) -> Result<Vec<Vec<usize>>> {
    let found = vocab.content_hash();
    if found != state_hash {
        return Err(Error::VocabMismatch {
            expected: state_hash.to_string(),
            found,
        });
    }
    if groups.len() != num_topics {
        return Err(invalid(format!(
            "{} keyword groups for {num_topics} topics; matching needs one group per topic",
            groups.len()
        )));
    }
    groups.indices(vocab)
}

/// Stage 1 followed by the OT-guided stage 2.
#[allow(clippy::too_many_arguments)]
pub fn train_semisupervised(
    bow: &BowMatrix,
    embeddings: &EmbeddingMatrix,
    groups: &KeywordGroups,
    vocab: &Vocabulary,
    model: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    train_two_stage(bow, embeddings, groups, vocab, model, config, GuidanceKind::Transport, observer)
}

#[allow(clippy::too_many_arguments)]
pub fn train_two_stage(
    bow: &BowMatrix,
    embeddings: &EmbeddingMatrix,
    groups: &KeywordGroups,
    vocab: &Vocabulary,
    model: &ModelConfig,
    config: &TrainConfig,
    kind: GuidanceKind,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    config.validate()?;
    check_inputs(bow, embeddings)?;
    let hash = vocab.content_hash();
    let indices = resolve_groups(groups, vocab, &hash, model.num_topics)?;
    let mut state = TopicModelState::new(model.clone(), embeddings.clone(), hash)?;
    let mut report = TrainReport::new(config.seed);
    let share = config.max_epochs as f64 / (config.max_epochs + config.stage2_epochs) as f64;
    run_stage1(&mut state, bow, config, &mut report, observer, share)?;
    run_stage2(&mut state, bow, &indices, config, kind, &mut report, observer, share)?;
    Ok((state, report))
}

/// Re-runs stage 2 only, from an already-trained state, with new keyword
/// groups. Keywords are validated before any parameter changes.
pub fn finetune_keywords(
    state: &TopicModelState,
    bow: &BowMatrix,
    groups: &KeywordGroups,
    vocab: &Vocabulary,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    guided_from(state, bow, groups, vocab, config, GuidanceKind::Transport, observer)
}

/// Stage 2 with cross-entropy to a greedy lowest-cost matching taken once from
/// the given state, instead of OT.
pub fn cross_entropy_variant(
    state: &TopicModelState,
    bow: &BowMatrix,
    groups: &KeywordGroups,
    vocab: &Vocabulary,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    guided_from(state, bow, groups, vocab, config, GuidanceKind::CrossEntropy, observer)
}

pub fn guided_from(
    state: &TopicModelState,
    bow: &BowMatrix,
    groups: &KeywordGroups,
    vocab: &Vocabulary,
    config: &TrainConfig,
    kind: GuidanceKind,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicModelState, TrainReport)> {
    config.validate()?;
    check_inputs(bow, &state.word_emb)?;
    let indices = resolve_groups(groups, vocab, &state.vocab_hash, state.num_topics())?;
    let mut next = state.clone();
    let mut report = TrainReport::new(config.seed);
    run_stage2(&mut next, bow, &indices, config, kind, &mut report, observer, 0.0)?;
    Ok((next, report))
}

/// Keyword cost matrix of the current decoder.
pub fn keyword_costs(state: &TopicModelState, groups: &[Vec<usize>]) -> Result<Array2<f64>> {
    cost_matrix_from_indices(&topic_word_matrix(state).mapv(f64::ln), groups)
}

#[allow(clippy::too_many_arguments)]
fn run_stage2(
    state: &mut TopicModelState,
    bow: &BowMatrix,
    groups: &[Vec<usize>],
    config: &TrainConfig,
    kind: GuidanceKind,
    report: &mut TrainReport,
    observer: &mut dyn TrainObserver,
    progress_start: f64,
) -> Result<()> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5354_4147_4532);
    let mut adam = Adam::new(&state.params);
    let weights = config.weights();
    let sinkhorn_opts = config.sinkhorn;
    let fixed = match kind {
        GuidanceKind::CrossEntropy => Some(greedy_min_cost_matching(&keyword_costs(state, groups)?)?),
        GuidanceKind::Transport => None,
    };
    let objective = |c: &Array2<f64>| -> Result<(f64, Array2<f64>)> {
        match &fixed {
            Some(assign) => {
                let p = Matching {
                    assignment: assign.clone(),
                    plan_gap: 0.0,
                }
                .permutation_matrix();
                Ok(((c * &p).sum(), p))
            }
            None => {
                let plan = sinkhorn_uniform(c, &sinkhorn_opts)?;
                Ok((ot_loss(c, &plan.plan, sinkhorn_opts.epsilon), plan.plan))
            }
        }
    };
    let guidance = Guidance {
        groups,
        objective: &objective,
    };
    let base = report.epochs.len();
    for epoch in 0..config.stage2_epochs {
        let epoch_start = Instant::now();
        let mut totals = EpochTotals::new();
        for batch in batches(bow.len(), config.batch_size, &mut rng) {
            if observer.cancelled() {
                return Err(Error::Cancelled);
            }
            let rows: Vec<&BowRow> = batch.iter().map(|&i| &bow.rows[i]).collect();
            let res = loss_and_gradients(state, &rows, NoiseMode::Sample(&mut rng), &weights, Some(&guidance))
                .map_err(|e| map_nonfinite(e, base + epoch))?;
            adam.step(&mut state.params, &res.grads, config.lr);
            state
                .check_finite("parameters after optimizer step")
                .map_err(|e| map_nonfinite(e, base + epoch))?;
            totals.add(&res.parts, rows.len());
        }
        let record = totals.record(Stage::Guided, epoch, config.lr, epoch_start.elapsed().as_secs_f64());
        if let Some(e) = diverged(base + epoch, &record) {
            return Err(e);
        }
        report.epochs.push(record.clone());
        let frac = progress_start + (1.0 - progress_start) * (epoch + 1) as f64 / config.stage2_epochs as f64;
        observer.on_epoch(&record, frac);
    }
    let c = keyword_costs(state, groups)?;
    let diag = crate::transport::diagnose(&c, &sinkhorn_opts)?;
    report.matching = Some(match &fixed {
        Some(assign) => Matching {
            assignment: assign.clone(),
            plan_gap: (&diag.plan.plan - &Matching {
                assignment: assign.clone(),
                plan_gap: 0.0,
            }
            .permutation_matrix())
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max),
        },
        None => diag.matching.clone(),
    });
    report.transport = Some(diag);
    report.stage2_seconds = start.elapsed().as_secs_f64();
    Ok(())
}
