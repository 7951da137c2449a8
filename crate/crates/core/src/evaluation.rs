//! Topic and clustering metrics: diversity, NPMI, C_v, purity, NMI, k-means,
//! classification accuracy and micro-F1, plus the ablation sweep driver.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BowMatrix, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, Result};
use crate::model::{doc_topic_proportions, topic_word_matrix, KappaMode, ModelConfig, RadiusMode, TopicModelState};
use crate::training::{train_unsupervised, NoObserver, TrainConfig};
use crate::transport::Matching;

pub const NPMI_WINDOW: usize = 10;
pub const CV_WINDOW: usize = 110;
pub const COHERENCE_TOP_K: usize = 10;
pub const DIVERSITY_TOP_K: usize = 25;
pub const NPMI_EPS: f64 = 1e-12;

/// Per topic, the top-k word indices by descending probability (ties by
/// lower word index), with their words and probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topics: Vec<TopicWords>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub indices: Vec<usize>,
    pub words: Vec<String>,
    pub probs: Vec<f64>,
}

impl TopicSummary {
    pub fn from_matrix(e: &Array2<f64>, vocab: &Vocabulary, k: usize) -> Self {
        let topics = e
            .rows()
            .into_iter()
            .map(|row| {
                let mut idx: Vec<usize> = (0..row.len()).collect();
                idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                idx.truncate(k);
                TopicWords {
                    words: idx.iter().map(|&i| vocab.token(i).to_string()).collect(),
                    probs: idx.iter().map(|&i| row[i]).collect(),
                    indices: idx,
                }
            })
            .collect();
        Self { topics }
    }

    pub fn from_state(state: &TopicModelState, vocab: &Vocabulary, k: usize) -> Self {
        Self::from_matrix(&topic_word_matrix(state), vocab, k)
    }

    pub fn index_lists(&self) -> Vec<Vec<usize>> {
        self.topics.iter().map(|t| t.indices.clone()).collect()
    }
}

/// Unique words among all topics' top-`k` lists over `M * k`.
pub fn diversity(topics: &[Vec<usize>], k: usize) -> Result<f64> {
    if topics.is_empty() || k == 0 {
        return Err(invalid("diversity needs topics and k >= 1"));
    }
    let mut unique: std::collections::HashSet<usize> = std::collections::HashSet::new();
    for t in topics {
        if t.len() < k {
            return Err(invalid(format!("topic has {} ranked words, need {k}", t.len())));
        }
        unique.extend(&t[..k]);
    }
    Ok(unique.len() as f64 / (topics.len() * k) as f64)
}

/// Boolean sliding-window document frequencies for a fixed word set.
#[derive(Debug, Clone)]
pub struct WindowCounts {
    pub windows: usize,
    single: HashMap<usize, usize>,
    pair: HashMap<(usize, usize), usize>,
}

impl WindowCounts {
    /// Every window of `window` consecutive tokens is one context; a document
    /// shorter than the window counts as a single context.
    pub fn count(streams: &[Vec<usize>], words: &[usize], window: usize) -> Self {
        let interest: std::collections::HashSet<usize> = words.iter().copied().collect();
        let mut single = HashMap::new();
        let mut pair = HashMap::new();
        let mut windows = 0;
        let mut present: Vec<usize> = Vec::new();
        for stream in streams {
            if stream.is_empty() {
                continue;
            }
            let n_windows = stream.len().saturating_sub(window) + 1;
            for start in 0..n_windows {
                let end = (start + window).min(stream.len());
                present.clear();
                present.extend(stream[start..end].iter().copied().filter(|w| interest.contains(w)));
                present.sort_unstable();
                present.dedup();
                windows += 1;
                for (i, &a) in present.iter().enumerate() {
                    *single.entry(a).or_insert(0) += 1;
                    for &b in &present[i + 1..] {
                        *pair.entry((a, b)).or_insert(0) += 1;
                    }
                }
            }
        }
        Self { windows, single, pair }
    }

    pub fn p(&self, w: usize) -> f64 {
        *self.single.get(&w).unwrap_or(&0) as f64 / self.windows.max(1) as f64
    }

    pub fn p_joint(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.p(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        *self.pair.get(&key).unwrap_or(&0) as f64 / self.windows.max(1) as f64
    }

    /// `ln((p_ab + eps) / (p_a p_b)) / -ln(p_ab + eps)`; `None` when a word
    /// never occurs.
    pub fn npmi(&self, a: usize, b: usize, eps: f64) -> Option<f64> {
        let (pa, pb) = (self.p(a), self.p(b));
        if pa == 0.0 || pb == 0.0 {
            return None;
        }
        let pab = self.p_joint(a, b) + eps;
        let denom = -pab.ln();
        if denom <= 0.0 {
            return Some(1.0);
        }
        Some(((pab / (pa * pb)).ln() / denom).clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub score: f64,
    pub per_topic: Vec<f64>,
    pub pairs_scored: usize,
    /// Pairs skipped because a word never occurs in the reference corpus.
    pub pairs_skipped: usize,
}

/// Mean over topics of the mean pairwise NPMI among each topic's top-k words.
pub fn npmi(topics: &[Vec<usize>], streams: &[Vec<usize>], window: usize, top_k: usize, eps: f64) -> Result<CoherenceReport> {
    if topics.is_empty() || window == 0 || top_k < 2 {
        return Err(invalid("npmi needs topics, window >= 1 and top_k >= 2"));
    }
    let words: Vec<usize> = topics.iter().flat_map(|t| t.iter().take(top_k).copied()).collect();
    let counts = WindowCounts::count(streams, &words, window);
    let mut per_topic = Vec::with_capacity(topics.len());
    let (mut scored, mut skipped) = (0, 0);
    for t in topics {
        let top = &t[..top_k.min(t.len())];
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..top.len() {
            for j in (i + 1)..top.len() {
                match counts.npmi(top[i], top[j], eps) {
                    Some(v) => {
                        sum += v;
                        n += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        scored += n;
        per_topic.push(if n > 0 { sum / n as f64 } else { 0.0 });
    }
    Ok(CoherenceReport {
        score: per_topic.iter().sum::<f64>() / per_topic.len() as f64,
        per_topic,
        pairs_scored: scored,
        pairs_skipped: skipped,
    })
}

/// One-set C_v score of a single topic from its words' context vectors: mean
/// cosine between each vector and the sum of all of them.
pub fn cv_from_context_vectors(vectors: &[Vec<f64>]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    let dim = vectors[0].len();
    let total: Vec<f64> = (0..dim).map(|d| vectors.iter().map(|v| v[d]).sum()).collect();
    let tn = total.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos: f64 = vectors
        .iter()
        .map(|v| {
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vn == 0.0 || tn == 0.0 {
                0.0
            } else {
                v.iter().zip(&total).map(|(a, b)| a * b).sum::<f64>() / (vn * tn)
            }
        })
        .sum();
    cos / vectors.len() as f64
}

/// C_v coherence: boolean sliding windows, NPMI context vectors over the topic's
/// top-k words (negative NPMI clamped to zero), one-set cosine segmentation.
pub fn c_v(topics: &[Vec<usize>], streams: &[Vec<usize>], window: usize, top_k: usize) -> Result<CoherenceReport> {
    if topics.is_empty() || window == 0 || top_k < 2 {
        return Err(invalid("c_v needs topics, window >= 1 and top_k >= 2"));
    }
    let words: Vec<usize> = topics.iter().flat_map(|t| t.iter().take(top_k).copied()).collect();
    let counts = WindowCounts::count(streams, &words, window);
    let mut per_topic = Vec::with_capacity(topics.len());
    let (mut scored, mut skipped) = (0, 0);
    for t in topics {
        let top = &t[..top_k.min(t.len())];
        let vectors: Vec<Vec<f64>> = top
            .iter()
            .map(|&a| {
                top.iter()
                    .map(|&b| match counts.npmi(a, b, NPMI_EPS) {
                        Some(v) => {
                            scored += 1;
                            v.max(0.0)
                        }
                        None => {
                            skipped += 1;
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        per_topic.push(cv_from_context_vectors(&vectors));
    }
    Ok(CoherenceReport {
        score: per_topic.iter().sum::<f64>() / per_topic.len() as f64,
        per_topic,
        pairs_scored: scored,
        pairs_skipped: skipped,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Most probable topic per document under deterministic inference.
pub fn top_assignments(state: &TopicModelState, bow: &BowMatrix) -> Result<Vec<usize>> {
    Ok(doc_topic_proportions(state, &bow.rows)?.iter().map(|z| argmax(z)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(invalid(format!("k = {k} with {n} points")));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(invalid(format!("only {} distinct points for k = {k}", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    let mut labels = vec![0; n];
    let mut history = Vec::new();
    for _ in 0..300 {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (mut bl, mut bd) = (0, f64::INFINITY);
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(p, cen);
                if d < bd {
                    bl = c;
                    bd = d;
                }
            }
            changed |= labels[i] != bl;
            labels[i] = bl;
            inertia += bd;
        }
        history.push(inertia);
        if !changed && history.len() > 1 {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
        history,
    }
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<BTreeMap<(usize, usize), usize>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(invalid("label vectors must be non-empty and of equal length"));
    }
    let mut m = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *m.entry((p, t)).or_insert(0) += 1;
    }
    Ok(m)
}

/// `(1/N) sum_clusters max_class |cluster ∩ class|`.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(p, _), &n) in &table {
        let e = best.entry(p).or_insert(0);
        *e = (*e).max(n);
    }
    Ok(best.values().sum::<usize>() as f64 / pred.len() as f64)
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two label entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let mut pc: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tc: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(p, t), &c) in &table {
        *pc.entry(p).or_insert(0) += c;
        *tc.entry(t).or_insert(0) += c;
    }
    let hp = entropy_of(pc.values().copied(), n);
    let ht = entropy_of(tc.values().copied(), n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = table
        .iter()
        .map(|(&(p, t), &c)| {
            let pij = c as f64 / n;
            pij * (pij / ((pc[&p] as f64 / n) * (tc[&t] as f64 / n))).ln()
        })
        .sum();
    let denom = 0.5 * (hp + ht);
    Ok((mi / denom).clamp(0.0, 1.0))
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(invalid("label vectors must be non-empty and of equal length"));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Micro-averaged F1 over classes from pooled TP/FP/FN counts.
pub fn micro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(invalid("label vectors must be non-empty and of equal length"));
    }
    let tp = pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64;
    let fp = pred.len() as f64 - tp;
    let fn_ = truth.len() as f64 - tp;
    let denom = 2.0 * tp + fp + fn_;
    Ok(if denom == 0.0 { 0.0 } else { 2.0 * tp / denom })
}

/// Predicted class per document: the keyword group matched to its top topic.
pub fn classify(state: &TopicModelState, bow: &BowMatrix, matching: &Matching) -> Result<Vec<usize>> {
    if matching.assignment.len() != state.num_topics() {
        return Err(invalid("matching size differs from the number of topics"));
    }
    Ok(top_assignments(state, bow)?
        .into_iter()
        .map(|t| matching.assignment[t])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// Single-run metric values; `None` when the inputs needed are missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub diversity: Option<f64>,
    pub npmi: Option<f64>,
    pub c_v: Option<f64>,
    pub top_purity: Option<f64>,
    pub top_nmi: Option<f64>,
    pub km_purity: Option<f64>,
    pub km_nmi: Option<f64>,
    pub accuracy: Option<f64>,
    pub micro_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub diversity: Option<MetricSummary>,
    pub npmi: Option<MetricSummary>,
    pub c_v: Option<MetricSummary>,
    pub top_purity: Option<MetricSummary>,
    pub top_nmi: Option<MetricSummary>,
    pub km_purity: Option<MetricSummary>,
    pub km_nmi: Option<MetricSummary>,
    pub accuracy: Option<MetricSummary>,
    pub micro_f1: Option<MetricSummary>,
}

impl MetricsReport {
    pub fn aggregate(runs: &[RunMetrics]) -> Self {
        let col = |f: fn(&RunMetrics) -> Option<f64>| {
            let v: Vec<f64> = runs.iter().filter_map(f).collect();
            if v.len() == runs.len() {
                MetricSummary::of(&v)
            } else {
                None
            }
        };
        Self {
            runs: runs.len(),
            diversity: col(|r| r.diversity),
            npmi: col(|r| r.npmi),
            c_v: col(|r| r.c_v),
            top_purity: col(|r| r.top_purity),
            top_nmi: col(|r| r.top_nmi),
            km_purity: col(|r| r.km_purity),
            km_nmi: col(|r| r.km_nmi),
            accuracy: col(|r| r.accuracy),
            micro_f1: col(|r| r.micro_f1),
        }
    }
}

/// Which metric groups to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSelection {
    pub diversity: bool,
    pub coherence: bool,
    pub clustering: bool,
    pub classification: bool,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self {
            diversity: true,
            coherence: true,
            clustering: true,
            classification: true,
        }
    }
}

/// Everything the metrics read from a corpus.
pub struct EvalData<'a> {
    pub bow: &'a BowMatrix,
    /// In-vocabulary token streams for the coherence reference corpus.
    pub streams: &'a [Vec<usize>],
    pub vocab: &'a Vocabulary,
}

pub fn evaluate(
    state: &TopicModelState,
    data: &EvalData,
    matching: Option<&Matching>,
    select: MetricSelection,
    seed: u64,
) -> Result<RunMetrics> {
    let mut out = RunMetrics::default();
    let summary = TopicSummary::from_state(state, data.vocab, DIVERSITY_TOP_K.max(COHERENCE_TOP_K));
    let lists = summary.index_lists();
    if select.diversity {
        out.diversity = Some(diversity(&lists, DIVERSITY_TOP_K.min(data.vocab.len()))?);
    }
    if select.coherence && !data.streams.is_empty() {
        let k = COHERENCE_TOP_K.min(data.vocab.len());
        out.npmi = Some(npmi(&lists, data.streams, NPMI_WINDOW, k, NPMI_EPS)?.score);
        out.c_v = Some(c_v(&lists, data.streams, CV_WINDOW, k)?.score);
    }
    let labels = data.bow.complete_labels();
    if let Some(truth) = &labels {
        let z = doc_topic_proportions(state, &data.bow.rows)?;
        let top: Vec<usize> = z.iter().map(|v| argmax(v)).collect();
        if select.clustering {
            out.top_purity = Some(purity(&top, truth)?);
            out.top_nmi = Some(nmi(&top, truth)?);
            let k = data.bow.num_classes().unwrap_or(1).max(1);
            if let Ok(km) = kmeans(&z, k, seed, 10) {
                out.km_purity = Some(purity(&km.labels, truth)?);
                out.km_nmi = Some(nmi(&km.labels, truth)?);
            }
        }
        if select.classification {
            if let Some(m) = matching {
                let pred: Vec<usize> = top.iter().map(|&t| m.assignment[t]).collect();
                out.accuracy = Some(accuracy(&pred, truth)?);
                out.micro_f1 = Some(micro_f1(&pred, truth)?);
            }
        }
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("spearman needs two equal-length samples of size >= 2"));
    }
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Radius,
    Kappa,
}

/// A grid point: a fixed radius, a fixed kappa, or a learnable kappa (`None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub kind: AblationKind,
    pub value: Option<f64>,
}

impl AblationPoint {
    pub fn label(&self) -> String {
        match self.value {
            Some(v) => format!("{v}"),
            None => "varied".into(),
        }
    }

    fn apply(&self, cfg: &mut ModelConfig) -> Result<()> {
        match (self.kind, self.value) {
            (AblationKind::Radius, Some(r)) => cfg.radius = RadiusMode::Fixed(r),
            (AblationKind::Radius, None) => return Err(invalid("radius grid points need a value")),
            (AblationKind::Kappa, Some(k)) => cfg.kappa = KappaMode::Fixed(k),
            (AblationKind::Kappa, None) => cfg.kappa = KappaMode::Learnable,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub point: AblationPoint,
    pub metrics: MetricsReport,
    /// Per-seed metrics, in seed order.
    pub runs: Vec<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub kind: AblationKind,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn header(kind: AblationKind) -> &'static [&'static str] {
        match kind {
            AblationKind::Radius => &[
                "temperature", "Top-Purity", "Top-NMI", "KM-purity", "KM-NMI", "NPMI", "C_v", "diversity",
            ],
            AblationKind::Kappa => &[
                "kappa", "diversity", "Top-Purity", "Top-Nmi", "Km-Purity", "Km-Nmi", "NPMI", "C_v",
            ],
        }
    }

    /// CSV of per-point means, four decimals.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header(self.kind)).map_err(csv_err)?;
        let f = |m: &Option<MetricSummary>| m.map_or(String::new(), |s| format!("{:.4}", s.mean));
        for row in &self.rows {
            let m = &row.metrics;
            let rec = match self.kind {
                AblationKind::Radius => vec![
                    row.point.label(),
                    f(&m.top_purity),
                    f(&m.top_nmi),
                    f(&m.km_purity),
                    f(&m.km_nmi),
                    f(&m.npmi),
                    f(&m.c_v),
                    f(&m.diversity),
                ],
                AblationKind::Kappa => vec![
                    row.point.label(),
                    f(&m.diversity),
                    f(&m.top_purity),
                    f(&m.top_nmi),
                    f(&m.km_purity),
                    f(&m.km_nmi),
                    f(&m.npmi),
                    f(&m.c_v),
                ],
            };
            w.write_record(rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Input(e.to_string())
}

/// Trains one unsupervised model per grid point and seed and tabulates the
/// clustering, coherence and diversity metrics.
pub fn ablation_sweep(
    grid: &[AblationPoint],
    base: &ModelConfig,
    train: &TrainConfig,
    embeddings: &EmbeddingMatrix,
    data: &EvalData,
    seeds: &[u64],
) -> Result<AblationTable> {
    let kind = grid.first().ok_or_else(|| invalid("empty ablation grid"))?.kind;
    if grid.iter().any(|p| p.kind != kind) {
        return Err(invalid("ablation grid mixes radius and kappa points"));
    }
    if seeds.is_empty() {
        return Err(invalid("ablation needs at least one seed"));
    }
    let hash = data.vocab.content_hash();
    let mut rows = Vec::new();
    for point in grid {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            point.apply(&mut cfg)?;
            cfg.seed = seed;
            let tc = TrainConfig { seed, ..train.clone() };
            let (state, _) = train_unsupervised(data.bow, embeddings, &cfg, &tc, &hash, &mut NoObserver)?;
            runs.push(evaluate(
                &state,
                data,
                None,
                MetricSelection {
                    classification: false,
                    ..Default::default()
                },
                seed,
            )?);
        }
        rows.push(AblationRow {
            point: *point,
            metrics: MetricsReport::aggregate(&runs),
            runs,
        });
    }
    Ok(AblationTable { kind, rows })
}
