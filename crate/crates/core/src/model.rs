//! The topic network: a bag-of-words encoder producing a vMF (or Gaussian)
//! posterior, radius-scaled softmax topic proportions, an embedding decoder
//! `E = softmax(e_T e_V^T)`, the loss terms, and hand-written backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BowRow;
use crate::embedding::{init_topic_embeddings, EmbeddingMatrix};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    self, draw_gaussian_noise, draw_vmf_noise, gaussian_kl_to_standard, gaussian_sample_backward,
    gaussian_sample_from_noise, vmf_kl_grad_kappa, vmf_kl_to_uniform, vmf_noise_score,
    vmf_sample_backward, vmf_sample_from_noise, GaussianParams, LatentNoise, LatentSample, VmfParams,
};
use crate::transport::cost_matrix_from_indices;

pub const DEFAULT_RADIUS: f64 = 10.0;
/// Learnable kappa starts near this value; the encoder head bias is offset accordingly.
pub const KAPPA_INIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    Vmf,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    Fixed(f64),
    /// One shared learnable radius, initialized at 10.
    LearnableScalar,
    /// One learnable radius per topic, initialized at 10.
    LearnableVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// `kappa = softplus(w . h + b)` from the encoder.
    Learnable,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_topics: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
    pub radius: RadiusMode,
    pub kappa: KappaMode,
    pub latent: LatentKind,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_topics: 10,
            hidden_sizes: vec![256, 64],
            dropout: 0.5,
            radius: RadiusMode::Fixed(DEFAULT_RADIUS),
            kappa: KappaMode::Learnable,
            latent: LatentKind::Vmf,
            embedding_dim: 100,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 2 {
            return Err(invalid("num_topics must be >= 2"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(invalid("hidden_sizes must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        if let RadiusMode::Fixed(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("fixed radius must be positive"));
            }
        }
        if let KappaMode::Fixed(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(invalid("fixed kappa must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Affine layer `y = W x + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn init<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((output, input), |_| rng.random_range(-bound..bound)),
            b: Array1::from_shape_fn(output, |_| rng.random_range(-bound..bound)),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.to_vec();
        for (o, row) in self.w.rows().into_iter().enumerate() {
            let row = row.as_slice().expect("standard layout");
            y[o] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        y
    }

    fn apply_sparse(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut y = self.b.to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            for &(j, v) in x {
                *yo += self.w[[o, j]] * v;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &[f64], gy: &[f64], grad: &mut Dense, want_input: bool) -> Vec<f64> {
        let mut gx = vec![0.0; if want_input { x.len() } else { 0 }];
        for (o, &g) in gy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let mut gw = grad.w.row_mut(o);
            let gw = gw.as_slice_mut().expect("standard layout");
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            if want_input {
                let w = self.w.row(o);
                for (gxi, wi) in gx.iter_mut().zip(w.iter()) {
                    *gxi += g * wi;
                }
            }
        }
        gx
    }

    fn backward_sparse(&self, x: &[(usize, f64)], gy: &[f64], grad: &mut Dense) {
        for (o, &g) in gy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            for &(j, v) in x {
                grad.w[[o, j]] += g * v;
            }
        }
    }
}

/// Every trainable tensor. The same shape doubles as a gradient record and as
/// optimizer moment storage. Word embeddings are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub hidden: Vec<Dense>,
    /// vMF mean direction (before normalization) or Gaussian mean; M outputs.
    pub mean_head: Dense,
    /// vMF: one output, softplus gives kappa. Gaussian: M outputs of log sigma.
    pub spread_head: Dense,
    /// M×D topic embeddings `e_T`.
    pub topic_emb: Array2<f64>,
    /// Empty for a fixed radius, one entry for a shared radius, M otherwise.
    pub radius: Array1<f64>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.iter().map(Dense::zeros_like).collect(),
            mean_head: self.mean_head.zeros_like(),
            spread_head: self.spread_head.zeros_like(),
            topic_emb: Array2::zeros(self.topic_emb.raw_dim()),
            radius: Array1::zeros(self.radius.raw_dim()),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for d in self.hidden.iter().chain([&self.mean_head, &self.spread_head]) {
            out.push(d.w.as_slice().expect("standard layout"));
            out.push(d.b.as_slice().expect("standard layout"));
        }
        out.push(self.topic_emb.as_slice().expect("standard layout"));
        out.push(self.radius.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for d in self.hidden.iter_mut() {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        for d in [&mut self.mean_head, &mut self.spread_head] {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.topic_emb.as_slice_mut().expect("standard layout"));
        out.push(self.radius.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Per-tensor Euclidean norms, for diagnostics.
    pub fn norms(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelState {
    pub config: ModelConfig,
    pub params: Params,
    pub word_emb: EmbeddingMatrix,
    pub vocab_hash: String,
}

impl TopicModelState {
    pub fn new(config: ModelConfig, word_emb: EmbeddingMatrix, vocab_hash: impl Into<String>) -> Result<Self> {
        config.validate()?;
        if word_emb.dim() != config.embedding_dim {
            return Err(invalid(format!(
                "embedding_dim {} does not match word embeddings of dimension {}",
                config.embedding_dim,
                word_emb.dim()
            )));
        }
        let m = config.num_topics;
        let v = word_emb.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut hidden = Vec::new();
        let mut width = v;
        for &h in &config.hidden_sizes {
            hidden.push(Dense::init(&mut rng, width, h));
            width = h;
        }
        let mean_head = Dense::init(&mut rng, width, m);
        let spread_out = match config.latent {
            LatentKind::Vmf => 1,
            LatentKind::Gaussian => m,
        };
        let mut spread_head = Dense::init(&mut rng, width, spread_out);
        if config.latent == LatentKind::Vmf {
            spread_head.b[0] += softplus_inverse(KAPPA_INIT);
        }
        let topic_emb = init_topic_embeddings(m, config.embedding_dim, rng.random())?;
        let radius = match config.radius {
            RadiusMode::Fixed(_) => Array1::zeros(0),
            RadiusMode::LearnableScalar => Array1::from_elem(1, DEFAULT_RADIUS),
            RadiusMode::LearnableVector => Array1::from_elem(m, DEFAULT_RADIUS),
        };
        Ok(Self {
            config,
            params: Params {
                hidden,
                mean_head,
                spread_head,
                topic_emb,
                radius,
            },
            word_emb,
            vocab_hash: vocab_hash.into(),
        })
    }

    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.word_emb.len()
    }

    /// Per-topic radius values.
    pub fn radii(&self) -> Vec<f64> {
        let m = self.num_topics();
        match self.config.radius {
            RadiusMode::Fixed(r) => vec![r; m],
            RadiusMode::LearnableScalar => vec![self.params.radius[0]; m],
            RadiusMode::LearnableVector => self.params.radius.to_vec(),
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.params.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.into(),
                detail: format!("parameter tensor norms {:?}", self.params.norms()),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentParams {
    Vmf(VmfParams),
    Gaussian(GaussianParams),
}

impl LatentParams {
    pub fn kl(&self) -> f64 {
        match self {
            LatentParams::Vmf(p) => vmf_kl_to_uniform(p.dim(), p.kappa),
            LatentParams::Gaussian(p) => gaussian_kl_to_standard(p),
        }
    }

    /// Posterior mean direction used for deterministic inference.
    pub fn mean(&self) -> &[f64] {
        match self {
            LatentParams::Vmf(p) => &p.mu,
            LatentParams::Gaussian(p) => &p.mu,
        }
    }
}

/// Randomness consumed by one document's training-mode forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocNoise {
    /// Per hidden layer, per unit: 0 or `1 / (1 - dropout)`.
    pub dropout: Vec<Vec<f64>>,
    pub latent: LatentNoise,
}

/// Where a forward pass gets its randomness.
pub enum NoiseMode<'a> {
    /// Evaluation: no dropout and `eta = mu`.
    Deterministic,
    /// Fresh draws; the kappa gradient is an unbiased estimate for the
    /// expected loss, including the rejection-correction term.
    Sample(&'a mut ChaCha8Rng),
    /// Replays recorded draws; gradients are exact for that fixed noise.
    Fixed(&'a [DocNoise]),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean per-document multinomial negative log-likelihood.
    pub recon: f64,
    /// Mean per-document KL to the prior.
    pub kl: f64,
    /// `H(E)`; enters the objective as `-alpha * sign * H`.
    pub entropy: f64,
    /// Keyword guidance term (OT or cross-entropy), before `delta`.
    pub guidance: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub kl: f64,
    pub alpha: f64,
    /// `+1` subtracts `alpha * H(E)` from the loss (the literal objective);
    /// `-1` adds it.
    pub entropy_sign: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kl: 1.0,
            alpha: 1.0,
            entropy_sign: 1.0,
            delta: 1.0,
        }
    }
}

/// Cost-matrix objective attached to the decoder: given `C` (M×|S|), returns
/// the loss and `dL/dC`.
pub type GuidanceFn<'a> = dyn Fn(&Array2<f64>) -> Result<(f64, Array2<f64>)> + 'a;

pub struct Guidance<'a> {
    pub groups: &'a [Vec<usize>],
    pub objective: &'a GuidanceFn<'a>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub parts: LossParts,
    pub grads: Params,
    pub noise: Vec<DocNoise>,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub params: LatentParams,
    pub eta: Vec<f64>,
    pub z: Vec<f64>,
    pub recon_log_probs: Vec<f64>,
    pub losses: LossParts,
}

/// `softmax(radius ⊙ eta)`.
pub fn topic_proportions(eta: &[f64], radius: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = eta.iter().zip(radius).map(|(e, r)| e * r).collect();
    softmax(&s)
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Row-wise softmax and its logarithm.
fn row_softmax(logits: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut log = logits.clone();
    for mut row in log.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    (log.mapv(f64::exp), log)
}

/// `E = row-softmax(e_T e_V^T)`, M×V.
pub fn topic_word_matrix(state: &TopicModelState) -> Array2<f64> {
    decoder(&state.params.topic_emb, &state.word_emb).0
}

fn decoder(topic_emb: &Array2<f64>, word_emb: &EmbeddingMatrix) -> (Array2<f64>, Array2<f64>) {
    row_softmax(&topic_emb.dot(&word_emb.vectors().t()))
}

/// `ln(z E)`.
pub fn reconstruct_log_probs(z: &[f64], e: &Array2<f64>) -> Vec<f64> {
    let zv = ndarray::ArrayView1::from(z);
    zv.dot(e).mapv(f64::ln).to_vec()
}

/// `-sum_t sum_j E_tj ln E_tj`.
pub fn topic_word_entropy(e: &Array2<f64>) -> f64 {
    -e.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Multinomial reconstruction loss plus KL; `total = recon + kl`.
pub fn elbo_loss(x: &BowRow, forward: &ForwardResult) -> LossParts {
    let recon = -x
        .entries
        .iter()
        .map(|&(j, c)| c as f64 * forward.recon_log_probs[j as usize])
        .sum::<f64>();
    let kl = forward.params.kl();
    LossParts {
        recon,
        kl,
        total: recon + kl,
        ..Default::default()
    }
}

fn normalized_input(x: &BowRow) -> Vec<(usize, f64)> {
    let total = x.total() as f64;
    if total == 0.0 {
        return Vec::new();
    }
    x.entries.iter().map(|&(j, c)| (j as usize, c as f64 / total)).collect()
}

fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs from one document's forward pass.
struct DocTrace {
    input: Vec<(usize, f64)>,
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    mean_raw: Vec<f64>,
    spread_raw: Vec<f64>,
    latent: LatentParams,
    sample: Option<LatentSample>,
    eta: Vec<f64>,
    z: Vec<f64>,
    noise: Option<DocNoise>,
}

enum DocNoiseSource<'a, 'r> {
    None,
    Draw(&'r mut ChaCha8Rng),
    Given(&'a DocNoise),
}

fn forward_doc(state: &TopicModelState, x: &BowRow, mut noise: DocNoiseSource) -> Result<DocTrace> {
    let cfg = &state.config;
    let p = &state.params;
    let input = normalized_input(x);
    let mut pre = Vec::with_capacity(p.hidden.len());
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(p.hidden.len());
    let mut masks = Vec::new();
    for (i, layer) in p.hidden.iter().enumerate() {
        let a = if i == 0 {
            layer.apply_sparse(&input)
        } else {
            layer.apply(&acts[i - 1])
        };
        let mut h: Vec<f64> = a.iter().map(|&v| v.max(0.0)).collect();
        let mask = match &mut noise {
            DocNoiseSource::None => None,
            DocNoiseSource::Given(n) => Some(n.dropout[i].clone()),
            DocNoiseSource::Draw(rng) => {
                let keep = 1.0 - cfg.dropout;
                Some(
                    (0..h.len())
                        .map(|_| {
                            if cfg.dropout == 0.0 || rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect::<Vec<f64>>(),
                )
            }
        };
        if let Some(mask) = mask {
            if mask.len() != h.len() {
                return Err(invalid("dropout mask size mismatch"));
            }
            h.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            masks.push(mask);
        }
        pre.push(a);
        acts.push(h);
    }
    let last = acts.last().expect("at least one hidden layer");
    let mean_raw = p.mean_head.apply(last);
    let spread_raw = p.spread_head.apply(last);
    let latent = match cfg.latent {
        LatentKind::Vmf => {
            let n = geometry::norm(&mean_raw);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::NonFinite {
                    context: "encoder mean head".into(),
                    detail: format!("norm {n}; parameter norms {:?}", p.norms()),
                });
            }
            let kappa = match cfg.kappa {
                KappaMode::Learnable => softplus(spread_raw[0]),
                KappaMode::Fixed(k) => k,
            };
            LatentParams::Vmf(VmfParams {
                mu: mean_raw.iter().map(|v| v / n).collect(),
                kappa,
            })
        }
        LatentKind::Gaussian => LatentParams::Gaussian(GaussianParams {
            mu: mean_raw.clone(),
            log_sigma: spread_raw.clone(),
        }),
    };
    let latent_noise = match noise {
        DocNoiseSource::None => None,
        DocNoiseSource::Given(n) => Some(n.latent.clone()),
        DocNoiseSource::Draw(rng) => Some(match &latent {
            LatentParams::Vmf(v) => draw_vmf_noise(v.dim(), v.kappa, rng)?,
            LatentParams::Gaussian(g) => draw_gaussian_noise(g.mu.len(), rng),
        }),
    };
    let sample = match &latent_noise {
        None => None,
        Some(n) => Some(match &latent {
            LatentParams::Vmf(v) => vmf_sample_from_noise(v, n)?,
            LatentParams::Gaussian(g) => gaussian_sample_from_noise(g, n)?,
        }),
    };
    let eta = match &sample {
        Some(s) => s.eta.clone(),
        None => latent.mean().to_vec(),
    };
    let z = topic_proportions(&eta, &state.radii());
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "topic proportions".into(),
            detail: format!("eta {eta:?}; parameter norms {:?}", p.norms()),
        });
    }
    Ok(DocTrace {
        input,
        pre,
        acts,
        mean_raw,
        spread_raw,
        latent,
        sample,
        eta,
        z,
        noise: latent_noise.map(|latent| DocNoise {
            dropout: masks,
            latent,
        }),
    })
}

/// Encoder only: posterior parameters for one document. In train mode dropout
/// is sampled from `rng`.
pub fn encode(state: &TopicModelState, x: &BowRow, rng: Option<&mut ChaCha8Rng>) -> Result<LatentParams> {
    check_row(state, x)?;
    let src = match rng {
        Some(r) => DocNoiseSource::Draw(r),
        None => DocNoiseSource::None,
    };
    Ok(forward_doc(state, x, src)?.latent)
}

fn check_row(state: &TopicModelState, x: &BowRow) -> Result<()> {
    match x.entries.last() {
        Some(&(j, _)) if j as usize >= state.vocab_size() => Err(invalid(format!(
            "bag-of-words index {j} outside vocabulary of size {}",
            state.vocab_size()
        ))),
        _ => Ok(()),
    }
}

/// Full single-document forward pass.
pub fn forward(state: &TopicModelState, x: &BowRow, rng: Option<&mut ChaCha8Rng>) -> Result<ForwardResult> {
    check_row(state, x)?;
    let src = match rng {
        Some(r) => DocNoiseSource::Draw(r),
        None => DocNoiseSource::None,
    };
    let t = forward_doc(state, x, src)?;
    let e = topic_word_matrix(state);
    let mut out = ForwardResult {
        recon_log_probs: reconstruct_log_probs(&t.z, &e),
        params: t.latent,
        eta: t.eta,
        z: t.z,
        losses: LossParts::default(),
    };
    out.losses = elbo_loss(x, &out);
    Ok(out)
}

fn doc_recon(x: &BowRow, z: &[f64], e: &Array2<f64>) -> f64 {
    x.entries
        .iter()
        .map(|&(j, c)| {
            let pj: f64 = z.iter().enumerate().map(|(k, zk)| zk * e[[k, j as usize]]).sum();
            -(c as f64) * pj.ln()
        })
        .sum()
}

/// Deterministic topic proportions (`eta = mu`, no dropout) for every row.
pub fn doc_topic_proportions(state: &TopicModelState, rows: &[BowRow]) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|x| {
            check_row(state, x)?;
            Ok(forward_doc(state, x, DocNoiseSource::None)?.z)
        })
        .collect()
}

/// Batch objective and its gradient with respect to every trainable parameter:
///
/// `mean_d(recon_d + w_kl KL_d) - alpha * sign * H(E) + delta * G(C(E))`
///
/// where `G` is the optional guidance objective on the keyword cost matrix.
pub fn loss_and_gradients(
    state: &TopicModelState,
    rows: &[&BowRow],
    noise: NoiseMode,
    weights: &LossWeights,
    guidance: Option<&Guidance>,
) -> Result<BatchResult> {
    if rows.is_empty() {
        return Err(invalid("empty batch"));
    }
    let m = state.num_topics();
    let cfg = &state.config;
    let p = &state.params;
    let (e, log_e) = decoder(&p.topic_emb, &state.word_emb);
    let radii = state.radii();
    let mut grads = p.zeros_like();
    let mut grad_e: Array2<f64> = Array2::zeros(e.raw_dim());
    let inv_b = 1.0 / rows.len() as f64;
    let mut parts = LossParts::default();
    let mut used_noise = Vec::with_capacity(rows.len());

    if let NoiseMode::Fixed(n) = &noise {
        if n.len() != rows.len() {
            return Err(invalid("noise and batch sizes differ"));
        }
    }
    // Sampled noise targets the expected loss and needs the score correction;
    // given noise makes the loss a deterministic function of the parameters.
    let score_correction = matches!(noise, NoiseMode::Sample(_));
    let mut noise = noise;
    for (d, x) in rows.iter().enumerate() {
        check_row(state, x)?;
        let src = match &mut noise {
            NoiseMode::Deterministic => DocNoiseSource::None,
            NoiseMode::Sample(rng) => DocNoiseSource::Draw(rng),
            NoiseMode::Fixed(n) => DocNoiseSource::Given(&n[d]),
        };
        let t = forward_doc(state, x, src)?;

        // Reconstruction: p_j = sum_t z_t E_tj over the document's words.
        let mut gz = vec![0.0; m];
        let mut recon = 0.0;
        for &(j, c) in &x.entries {
            let j = j as usize;
            let c = c as f64;
            let pj: f64 = (0..m).map(|k| t.z[k] * e[[k, j]]).sum();
            recon -= c * pj.ln();
            let g = -c / pj;
            for k in 0..m {
                gz[k] += g * e[[k, j]];
                grad_e[[k, j]] += inv_b * g * t.z[k];
            }
        }
        let kl = t.latent.kl();
        parts.recon += inv_b * recon;
        parts.kl += inv_b * kl;

        // z = softmax(r ⊙ eta)
        let zdot: f64 = t.z.iter().zip(&gz).map(|(a, b)| a * b).sum();
        let gs: Vec<f64> = (0..m).map(|k| t.z[k] * (gz[k] - zdot)).collect();
        let geta: Vec<f64> = (0..m).map(|k| radii[k] * gs[k]).collect();
        match cfg.radius {
            RadiusMode::Fixed(_) => {}
            RadiusMode::LearnableScalar => {
                grads.radius[0] += inv_b * (0..m).map(|k| gs[k] * t.eta[k]).sum::<f64>();
            }
            RadiusMode::LearnableVector => {
                for k in 0..m {
                    grads.radius[k] += inv_b * gs[k] * t.eta[k];
                }
            }
        }

        // Back through the latent sample and the KL term to the raw head outputs.
        let (g_mean_raw, g_spread_raw) = match &t.latent {
            LatentParams::Vmf(vp) => {
                let (g_mu, g_kappa_sample) = match &t.sample {
                    Some(s) if score_correction => {
                        let (g_mu, g_rep) = vmf_sample_backward(vp, s, &geta);
                        // Rejection correction, with the loss at eta = mu as baseline.
                        let z_mean = topic_proportions(&vp.mu, &radii);
                        let recon_mean = doc_recon(x, &z_mean, &e);
                        (g_mu, g_rep + (recon - recon_mean) * vmf_noise_score(vp, s))
                    }
                    Some(s) => vmf_sample_backward(vp, s, &geta),
                    None => (geta.clone(), 0.0),
                };
                let g_kappa = g_kappa_sample + weights.kl * vmf_kl_grad_kappa(m, vp.kappa);
                let n = geometry::norm(&t.mean_raw);
                let mu_g = geometry::dot(&vp.mu, &g_mu);
                let g_raw: Vec<f64> = (0..m).map(|k| (g_mu[k] - vp.mu[k] * mu_g) / n).collect();
                let g_spread = match cfg.kappa {
                    KappaMode::Learnable => vec![g_kappa * sigmoid(t.spread_raw[0])],
                    KappaMode::Fixed(_) => vec![0.0],
                };
                (g_raw, g_spread)
            }
            LatentParams::Gaussian(gp) => {
                let (mut g_mu, mut g_ls) = match &t.sample {
                    Some(s) => gaussian_sample_backward(gp, s, &geta),
                    None => (geta.clone(), vec![0.0; m]),
                };
                for k in 0..m {
                    g_mu[k] += weights.kl * gp.mu[k];
                    g_ls[k] += weights.kl * ((2.0 * gp.log_sigma[k]).exp() - 1.0);
                }
                (g_mu, g_ls)
            }
        };
        let g_mean_raw: Vec<f64> = g_mean_raw.iter().map(|g| g * inv_b).collect();
        let g_spread_raw: Vec<f64> = g_spread_raw.iter().map(|g| g * inv_b).collect();

        // Encoder MLP.
        let last = t.acts.last().expect("hidden layer");
        let mut gh = p.mean_head.backward(last, &g_mean_raw, &mut grads.mean_head, true);
        let gh2 = p.spread_head.backward(last, &g_spread_raw, &mut grads.spread_head, true);
        gh.iter_mut().zip(&gh2).for_each(|(a, b)| *a += b);
        for i in (0..p.hidden.len()).rev() {
            let mut ga = gh;
            for (u, g) in ga.iter_mut().enumerate() {
                let mut scale = if t.pre[i][u] > 0.0 { 1.0 } else { 0.0 };
                if let Some(n) = &t.noise {
                    scale *= n.dropout[i][u];
                }
                *g *= scale;
            }
            if i == 0 {
                p.hidden[0].backward_sparse(&t.input, &ga, &mut grads.hidden[0]);
                gh = Vec::new();
            } else {
                gh = p.hidden[i].backward(&t.acts[i - 1], &ga, &mut grads.hidden[i], true);
            }
        }
        if let Some(n) = t.noise {
            used_noise.push(n);
        }
    }

    // Topic-word entropy.
    let entropy = topic_word_entropy(&e);
    parts.entropy = entropy;
    let coef = weights.alpha * weights.entropy_sign;
    if coef != 0.0 {
        grad_e.zip_mut_with(&log_e, |g, &l| *g += coef * (l + 1.0));
    }

    // Keyword guidance on the cost matrix.
    if let Some(gd) = guidance {
        let c = cost_matrix_from_indices(&log_e, gd.groups)?;
        let (loss, gc) = (gd.objective)(&c)?;
        parts.guidance = loss;
        if weights.delta != 0.0 {
            for (s, group) in gd.groups.iter().enumerate() {
                let w = 1.0 / group.len() as f64;
                for &x in group {
                    for t in 0..m {
                        grad_e[[t, x]] -= weights.delta * gc[[t, s]] * w / e[[t, x]];
                    }
                }
            }
        }
    }

    parts.total = parts.recon + weights.kl * parts.kl - coef * parts.entropy + weights.delta * parts.guidance;

    // Softmax rows: G_L = E ⊙ (G - rowsum(E ⊙ G)); G_eT = G_L e_V.
    let row_dot = (&e * &grad_e).sum_axis(Axis(1));
    let mut g_logits = grad_e;
    for (t, mut row) in g_logits.rows_mut().into_iter().enumerate() {
        let rd = row_dot[t];
        row.zip_mut_with(&e.row(t), |g, &et| *g = et * (*g - rd));
    }
    grads.topic_emb = g_logits.dot(state.word_emb.vectors());

    if !parts.total.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite {
            context: "batch loss or gradient".into(),
            detail: format!("loss parts {parts:?}; parameter norms {:?}", p.norms()),
        });
    }
    Ok(BatchResult {
        parts,
        grads,
        noise: used_noise,
    })
}

/// Draws the noise a training step would use, so the same stochastic objective
/// can be re-evaluated under perturbed parameters.
pub fn sample_noise(state: &TopicModelState, rows: &[&BowRow], rng: &mut ChaCha8Rng) -> Result<Vec<DocNoise>> {
    rows.iter()
        .map(|x| {
            check_row(state, x)?;
            Ok(forward_doc(state, x, DocNoiseSource::Draw(rng))?
                .noise
                .expect("drawn noise is recorded"))
        })
        .collect()
}
