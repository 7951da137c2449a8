#![allow(clippy::needless_range_loop)]

//! Exit criteria. Each test prints one `[PASS]`/`[FAIL]` line.
//!
//! Training-based criteria share one synthetic corpus and run one at a time so
//! that wall-clock measurements are not skewed by concurrent tests.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spheretopic::corpus::{
    build_vocabulary, derive_keywords, split_indices, to_bow, token_streams, BowMatrix, BowRow, StopWords,
    VocabOptions, Vocabulary,
};
use spheretopic::embedding::{train_spherical, EmbeddingMatrix, SkipGramConfig};
use spheretopic::evaluation::{
    accuracy, argmax, c_v, classify, cv_from_context_vectors, diversity, evaluate, kmeans, micro_f1, nmi, npmi,
    purity, spearman, EvalData, MetricSelection, MetricSummary, NPMI_EPS,
};
use spheretopic::geometry::{
    max_softmax_on_sphere, mean_resultant_length, vmf_kl_to_uniform, vmf_log_normalizer,
};
use spheretopic::model::{
    loss_and_gradients, sample_noise, Guidance, KappaMode, LatentKind, LossWeights, ModelConfig, NoiseMode,
    RadiusMode, TopicModelState,
};
use spheretopic::synthetic::{generate, SyntheticConfig, SyntheticCorpus};
use spheretopic::training::{cross_entropy_variant, finetune_keywords, train_unsupervised, NoObserver, TrainConfig};
use spheretopic::transport::{ot_loss, sinkhorn_uniform, SinkhornOptions};
use spheretopic::verify::{kl_monte_carlo, lemma_harness, sampled_resultant_length, theorem_harness};

static HEAVY: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, passed: bool, detail: impl AsRef<str>) {
    println!("[{}] {name}: {}", if passed { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(passed, "{name}: {}", detail.as_ref());
}

struct Fixture {
    corpus: SyntheticCorpus,
    vocab: Vocabulary,
    bow: BowMatrix,
    streams: Vec<Vec<usize>>,
    emb: EmbeddingMatrix,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = generate(&SyntheticConfig::default()).unwrap();
        let vocab = build_vocabulary(&corpus.docs, &StopWords::english(), VocabOptions::default()).unwrap();
        let bow = to_bow(&corpus.docs, &vocab);
        let streams = token_streams(&corpus.docs, &vocab);
        let (emb, _) = train_spherical(&streams, vocab.len(), &SkipGramConfig::default()).unwrap();
        Fixture {
            corpus,
            vocab,
            bow,
            streams,
            emb,
        }
    })
}

fn synthetic_model(seed: u64) -> ModelConfig {
    ModelConfig {
        num_topics: 4,
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn transport_plan_matches_optimal_assignment() {
    let r = theorem_harness(100, 1e-3, 1e-6, 20240).unwrap();
    report(
        "OT plan rounds to the optimal matching with equal cost",
        r.failures.is_empty() && r.seconds < 10.0,
        format!(
            "{} cases, {} failures, max |<P,C> - tr C| = {:e}, {:.2}s {:?}",
            r.cases,
            r.failures.len(),
            r.max_cost_error,
            r.seconds,
            r.failures.first()
        ),
    );
}

#[test]
fn optimal_matchings_satisfy_exchange_condition() {
    let r = lemma_harness(100, 31).unwrap();
    report(
        "pairwise exchange condition at brute-force optima",
        r.failures.is_empty(),
        format!("{} cases, {} violations, worst slack {:e}", r.cases, r.failures.len(), -r.max_cost_error),
    );
}

#[test]
fn vmf_math_matches_oracles() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, m) in [3usize, 10, 25].into_iter().enumerate() {
        for (j, k) in [1.0f64, 10.0, 100.0].into_iter().enumerate() {
            let exact = vmf_kl_to_uniform(m, k);
            let (mc, se) = kl_monte_carlo(m, k, 1_000_000, (10 * i + j) as u64).unwrap();
            let rel = (exact - mc).abs() / exact;
            ok &= rel <= 0.02;
            lines.push(format!("KL M={m} k={k}: {exact:.5} vs MC {mc:.5}±{se:.5} ({:.2}%)", 100.0 * rel));
            let a = mean_resultant_length(m, k);
            let got = sampled_resultant_length(m, k, 1_000_000, (100 + 10 * i + j) as u64).unwrap();
            let rel = (got - a).abs() / a;
            ok &= rel <= 0.01;
            lines.push(format!("A M={m} k={k}: {got:.5} vs {a:.5} ({:.2}%)", 100.0 * rel));
        }
    }
    for k in [0.1f64, 1.0, 5.0, 20.0] {
        let c3 = (k / (4.0 * std::f64::consts::PI * k.sinh())).ln();
        let a3 = 1.0 / k.tanh() - 1.0 / k;
        let e1 = (vmf_log_normalizer(3, k) - c3).abs();
        let e2 = (mean_resultant_length(3, k) - a3).abs();
        ok &= e1 <= 1e-6 && e2 <= 1e-6;
        lines.push(format!("M=3 k={k}: |dC|={e1:e} |dA|={e2:e}"));
    }
    for l in &lines {
        println!("    {l}");
    }
    report("vMF KL, sampler and closed forms", ok, format!("{} checks", lines.len()));
}

#[test]
fn softmax_expressibility_on_sphere() {
    let low = max_softmax_on_sphere(10, 1.0).unwrap();
    let high = max_softmax_on_sphere(10, 10.0).unwrap();
    report(
        "max softmax on the sphere",
        (low - 0.2418).abs() <= 1e-3 && high >= 0.999,
        format!("(10, 1) = {low:.6}, (10, 10) = {high:.6}"),
    );
}

fn fd_rows(v: usize) -> Vec<BowRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..4)
        .map(|_| {
            let idx: Vec<usize> = (0..9).map(|_| rng.random_range(0..v)).collect();
            BowRow::from_indices(idx)
        })
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let _g = serial();
    let v = 14;
    let cfg = ModelConfig {
        num_topics: 4,
        hidden_sizes: vec![8, 6],
        dropout: 0.25,
        radius: RadiusMode::LearnableVector,
        embedding_dim: 6,
        seed: 9,
        ..ModelConfig::default()
    };
    let mut state = TopicModelState::new(cfg, EmbeddingMatrix::random(v, 6, 4).unwrap(), "fd").unwrap();
    state.params.radius.assign(&ndarray::array![2.0, 1.5, 3.0, 2.5]);
    let rows = fd_rows(v);
    let refs: Vec<&BowRow> = rows.iter().collect();
    let groups = vec![vec![0, 1], vec![2], vec![3, 4, 5], vec![6]];
    let opts = SinkhornOptions {
        epsilon: 0.5,
        max_iter: 100_000,
        tol: 1e-14,
    };
    let objective = |c: &Array2<f64>| -> spheretopic::Result<(f64, Array2<f64>)> {
        let plan = sinkhorn_uniform(c, &opts)?;
        Ok((ot_loss(c, &plan.plan, opts.epsilon), plan.plan))
    };
    let guidance = Guidance {
        groups: &groups,
        objective: &objective,
    };
    let noise = sample_noise(&state, &refs, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let weights = LossWeights::default();
    let eval = |s: &TopicModelState| {
        loss_and_gradients(s, &refs, NoiseMode::Fixed(&noise), &weights, Some(&guidance)).unwrap()
    };
    let base = eval(&state);
    let analytic = base.grads.tensors().iter().map(|t| t.to_vec()).collect::<Vec<_>>();
    let names = ["enc0.w", "enc0.b", "enc1.w", "enc1.b", "mean.w", "mean.b", "kappa.w", "kappa.b", "topic_emb", "radius"];
    let mut worst = vec![0.0f64; analytic.len()];
    let mut probe = state.clone();
    let h = 1e-5;
    for (ti, grads) in analytic.iter().enumerate() {
        for k in 0..grads.len() {
            probe.params.tensors_mut()[ti][k] += h;
            let up = eval(&probe).parts.total;
            probe.params.tensors_mut()[ti][k] -= 2.0 * h;
            let down = eval(&probe).parts.total;
            probe.params.tensors_mut()[ti][k] += h;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grads[k]).abs() / fd.abs().max(grads[k].abs()).max(1e-3);
            worst[ti] = worst[ti].max(err);
        }
    }
    // OT loss with respect to the cost matrix, plan re-solved at each point.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = Array2::from_shape_fn((4, 4), |_| rng.random_range(0.0..3.0));
    let p = sinkhorn_uniform(&c, &opts).unwrap().plan;
    let mut ot_worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut cu = c.clone();
            cu[[i, j]] += h;
            let mut cd = c.clone();
            cd[[i, j]] -= h;
            let fu = ot_loss(&cu, &sinkhorn_uniform(&cu, &opts).unwrap().plan, opts.epsilon);
            let fdn = ot_loss(&cd, &sinkhorn_uniform(&cd, &opts).unwrap().plan, opts.epsilon);
            let fd = (fu - fdn) / (2.0 * h);
            ot_worst = ot_worst.max((fd - p[[i, j]]).abs() / fd.abs().max(p[[i, j]]).max(1e-3));
        }
    }
    let det_ok = worst.iter().all(|&e| e <= 1e-4) && ot_worst <= 1e-4;
    let detail: Vec<String> = names.iter().zip(&worst).map(|(n, e)| format!("{n} {e:.1e}")).collect();
    println!("    deterministic paths: {}; ot_loss(C) {ot_worst:.1e}", detail.join(", "));

    // Stochastic kappa gradient: mean sampled gradient of E[recon] with respect
    // to the kappa head bias vs a finite difference of Monte-Carlo means.
    let cfg = ModelConfig {
        num_topics: 4,
        hidden_sizes: vec![8, 6],
        dropout: 0.0,
        radius: RadiusMode::Fixed(3.0),
        kappa: KappaMode::Learnable,
        embedding_dim: 6,
        seed: 9,
        ..ModelConfig::default()
    };
    let mut state = TopicModelState::new(cfg, EmbeddingMatrix::random(v, 6, 4).unwrap(), "fd").unwrap();
    let b0 = (5.0f64.exp_m1()).ln();
    state.params.spread_head.b[0] = b0;
    state.params.spread_head.w.fill(0.0);
    let one = vec![&rows[0]];
    let recon_only = LossWeights {
        kl: 0.0,
        alpha: 0.0,
        entropy_sign: 1.0,
        delta: 0.0,
    };
    let n_grad = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_grad {
        let g = loss_and_gradients(&state, &one, NoiseMode::Sample(&mut rng), &recon_only, None)
            .unwrap()
            .grads
            .spread_head
            .b[0];
        s += g;
        s2 += g * g;
    }
    let g_mean = s / n_grad as f64;
    let g_se = ((s2 / n_grad as f64 - g_mean * g_mean) / n_grad as f64).sqrt();
    let mc_mean = |b: f64, seed: u64| {
        let mut st = state.clone();
        st.params.spread_head.b[0] = b;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        (0..n)
            .map(|_| {
                loss_and_gradients(&st, &one, NoiseMode::Sample(&mut rng), &recon_only, None)
                    .unwrap()
                    .parts
                    .recon
            })
            .sum::<f64>()
            / n as f64
    };
    let hb = 0.2;
    let fds: Vec<f64> = (0..5u64)
        .map(|r| (mc_mean(b0 + hb, 1000 + r) - mc_mean(b0 - hb, 1000 + r)) / (2.0 * hb))
        .collect();
    let fd_mean = fds.iter().sum::<f64>() / fds.len() as f64;
    let fd_sd = (fds.iter().map(|f| (f - fd_mean).powi(2)).sum::<f64>() / (fds.len() - 1) as f64).sqrt();
    let se = (g_se * g_se + fd_sd * fd_sd / fds.len() as f64).sqrt();
    let z = (g_mean - fd_mean) / se;
    println!("    kappa head: sampled gradient {g_mean:.5} ± {g_se:.5}, MC finite difference {fd_mean:.5} ± {:.5}, z = {z:.2}", fd_sd / (fds.len() as f64).sqrt());
    report(
        "analytic gradients vs finite differences",
        det_ok && z.abs() <= 3.0,
        format!("worst deterministic rel err {:.1e}, kappa z-score {z:.2}", worst.iter().cloned().fold(ot_worst, f64::max)),
    );
}

#[test]
fn vmf_clusters_better_than_gaussian() {
    let _g = serial();
    let f = fixture();
    let data = EvalData {
        bow: &f.bow,
        streams: &f.streams,
        vocab: &f.vocab,
    };
    let hash = f.vocab.content_hash();
    let mut means = Vec::new();
    let mut slowest: f64 = 0.0;
    for (name, latent, radius) in [("vMF r=10", LatentKind::Vmf, 10.0), ("Gaussian", LatentKind::Gaussian, 1.0)] {
        let mut vals = Vec::new();
        for seed in 0..5 {
            let model = ModelConfig {
                latent,
                radius: RadiusMode::Fixed(radius),
                ..synthetic_model(seed)
            };
            let tc = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let t = Instant::now();
            let (state, _) = train_unsupervised(&f.bow, &f.emb, &model, &tc, &hash, &mut NoObserver).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            let m = evaluate(
                &state,
                &data,
                None,
                MetricSelection {
                    coherence: false,
                    ..Default::default()
                },
                seed,
            )
            .unwrap();
            vals.push(m.top_purity.unwrap());
        }
        let s = MetricSummary::of(&vals).unwrap();
        println!("    {name}: Top-Purity {:.4} ± {:.4} {vals:.4?}", s.mean, s.std);
        means.push(s.mean);
    }
    let (vmf, gauss) = (means[0], means[1]);
    report(
        "clusterability: vMF Top-Purity >= 0.8 and >= Gaussian + 0.05",
        vmf >= 0.8 && vmf - gauss >= 0.05 && slowest < 120.0,
        format!("vMF {vmf:.4}, Gaussian {gauss:.4}, margin {:.4}, slowest run {slowest:.1}s", vmf - gauss),
    );
}

#[test]
fn radius_sweep_direction() {
    let _g = serial();
    let f = fixture();
    let data = EvalData {
        bow: &f.bow,
        streams: &f.streams,
        vocab: &f.vocab,
    };
    let hash = f.vocab.content_hash();
    let (mut r, mut nmis, mut divs) = (Vec::new(), Vec::new(), Vec::new());
    for radius in [1.0, 5.0, 10.0, 15.0, 19.0] {
        for seed in 0..5 {
            let model = ModelConfig {
                radius: RadiusMode::Fixed(radius),
                ..synthetic_model(seed)
            };
            let tc = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let (state, _) = train_unsupervised(&f.bow, &f.emb, &model, &tc, &hash, &mut NoObserver).unwrap();
            let m = evaluate(
                &state,
                &data,
                None,
                MetricSelection {
                    coherence: false,
                    classification: false,
                    ..Default::default()
                },
                seed,
            )
            .unwrap();
            r.push(radius);
            nmis.push(m.top_nmi.unwrap());
            divs.push(m.diversity.unwrap());
        }
        let k = nmis.len() - 5;
        println!(
            "    radius {radius}: Top-NMI {:.4}, diversity {:.4}",
            nmis[k..].iter().sum::<f64>() / 5.0,
            divs[k..].iter().sum::<f64>() / 5.0
        );
    }
    let rho_nmi = spearman(&r, &nmis).unwrap();
    let rho_div = spearman(&r, &divs).unwrap();
    report(
        "radius sweep: Top-NMI rises and diversity falls with radius",
        rho_nmi > 0.0 && rho_div < 0.0,
        format!("Spearman(radius, Top-NMI) = {rho_nmi:.3}, Spearman(radius, diversity) = {rho_div:.3}, 25 runs"),
    );
}

struct SemiRun {
    ot_acc: f64,
    ce_acc: f64,
    stage1: f64,
    finetune: f64,
}

fn semi_runs() -> &'static [SemiRun] {
    static RUNS: OnceLock<Vec<SemiRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let f = fixture();
        let hash = f.vocab.content_hash();
        (0..10u64)
            .map(|seed| {
                let groups = derive_keywords(&f.corpus.docs, &f.vocab, 3, 0.2, seed).unwrap();
                let (_, test) = split_indices(f.corpus.docs.len(), 0.2, seed);
                let held_out = f.bow.subset(&test);
                let truth: Vec<usize> = held_out.labels.iter().map(|l| l.unwrap()).collect();
                let tc = TrainConfig {
                    seed,
                    ..TrainConfig::default()
                };
                let t = Instant::now();
                let (base, _) =
                    train_unsupervised(&f.bow, &f.emb, &synthetic_model(seed), &tc, &hash, &mut NoObserver).unwrap();
                let stage1 = t.elapsed().as_secs_f64();
                let t = Instant::now();
                let (ot, ot_report) = finetune_keywords(&base, &f.bow, &groups, &f.vocab, &tc, &mut NoObserver).unwrap();
                let finetune = t.elapsed().as_secs_f64();
                let (ce, ce_report) =
                    cross_entropy_variant(&base, &f.bow, &groups, &f.vocab, &tc, &mut NoObserver).unwrap();
                let acc = |s: &TopicModelState, m| accuracy(&classify(s, &held_out, m).unwrap(), &truth).unwrap();
                SemiRun {
                    ot_acc: acc(&ot, ot_report.matching.as_ref().unwrap()),
                    ce_acc: acc(&ce, ce_report.matching.as_ref().unwrap()),
                    stage1,
                    finetune,
                }
            })
            .collect()
    })
}

#[test]
fn transport_guidance_is_at_least_as_stable_as_cross_entropy() {
    let _g = serial();
    let runs = semi_runs();
    let ot = MetricSummary::of(&runs.iter().map(|r| r.ot_acc).collect::<Vec<_>>()).unwrap();
    let ce = MetricSummary::of(&runs.iter().map(|r| r.ce_acc).collect::<Vec<_>>()).unwrap();
    for (i, r) in runs.iter().enumerate() {
        println!("    seed {i}: OT {:.4}, CE {:.4}", r.ot_acc, r.ce_acc);
    }
    report(
        "semi-supervised stability over 10 seeds",
        ot.std <= ce.std && ot.mean >= ce.mean - 0.01,
        format!("OT {:.4} ± {:.4}, CE {:.4} ± {:.4}", ot.mean, ot.std, ce.mean, ce.std),
    );
}

#[test]
fn finetune_is_fast_relative_to_training() {
    let _g = serial();
    let runs = semi_runs();
    let stage1: f64 = runs.iter().map(|r| r.stage1).sum();
    let finetune: f64 = runs.iter().map(|r| r.finetune).sum();
    let worst = runs.iter().map(|r| r.finetune / r.stage1).fold(0.0, f64::max);
    report(
        "keyword fine-tune under 25% of stage-1 time",
        finetune < 0.25 * stage1,
        format!("fine-tune {finetune:.2}s vs stage 1 {stage1:.2}s (ratio {:.3}, worst seed {worst:.3})", finetune / stage1),
    );
}

#[test]
fn metric_unit_examples() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let t25: Vec<usize> = (0..25).collect();
    let u25: Vec<usize> = (25..50).collect();
    checks.push(("diversity disjoint = 1", close(diversity(&[t25.clone(), u25], 25).unwrap(), 1.0)));
    checks.push(("diversity identical = 0.5", close(diversity(&[t25.clone(), t25.clone()], 25).unwrap(), 0.5)));
    checks.push(("diversity single topic = 1", close(diversity(std::slice::from_ref(&t25), 25).unwrap(), 1.0)));

    let together: Vec<Vec<usize>> = (0..40).flat_map(|_| [vec![0, 1, 3, 3], vec![2, 4, 4, 4]]).collect();
    checks.push(("NPMI always together = 1", close(npmi(&[vec![0, 1]], &together, 10, 2, NPMI_EPS).unwrap().score, 1.0)));
    let apart = npmi(&[vec![0, 2]], &together, 10, 2, NPMI_EPS).unwrap().score;
    checks.push(("NPMI never together -> -1 with smoothing", close(apart, (NPMI_EPS / 0.25).ln() / -NPMI_EPS.ln()) && apart < -0.9));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let random: Vec<Vec<usize>> = (0..5000).map(|_| (0..10).map(|_| rng.random_range(0..20)).collect()).collect();
    checks.push(("NPMI independent words near 0", npmi(&[vec![0, 1, 2, 3]], &random, 10, 4, NPMI_EPS).unwrap().score.abs() < 0.05));
    let skipped = npmi(&[vec![0, 99]], &together, 10, 2, NPMI_EPS).unwrap();
    checks.push(("NPMI skips unseen words", skipped.pairs_skipped == 1 && skipped.pairs_scored == 0));

    checks.push(("C_v parallel vectors = 1", close(cv_from_context_vectors(&[vec![0.3, 0.4], vec![0.6, 0.8]]), 1.0)));
    checks.push(("C_v orthogonal = 1/sqrt 2", close(cv_from_context_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]]), std::f64::consts::FRAC_1_SQRT_2)));
    let cv = c_v(&[vec![0, 1, 2], vec![3, 4, 0]], &random, 110, 3).unwrap();
    checks.push(("C_v in [0, 1]", cv.per_topic.iter().all(|v| (0.0..=1.0).contains(v))));

    checks.push(("argmax one-hot", argmax(&[0.0, 1.0, 0.0]) == 1));
    checks.push(("argmax tie -> lowest index", argmax(&[0.5, 0.5]) == 0));

    let mut blobs = Vec::new();
    let mut truth = Vec::new();
    for i in 0..40 {
        let c = if i % 2 == 0 { 0.0 } else { 20.0 };
        blobs.push(vec![c + rng.random::<f64>(), c - rng.random::<f64>()]);
        truth.push(i % 2);
    }
    let km = kmeans(&blobs, 2, 3, 10).unwrap();
    checks.push(("k-means separated blobs recovered", close(purity(&km.labels, &truth).unwrap(), 1.0)));
    checks.push(("k-means inertia non-increasing", km.history.windows(2).all(|w| w[1] <= w[0] + 1e-12)));
    let one = kmeans(&blobs, 1, 3, 10).unwrap();
    let mean0 = blobs.iter().map(|p| p[0]).sum::<f64>() / 40.0;
    checks.push(("k-means k=1 centroid = mean", close(one.centroids[0][0], mean0)));
    checks.push(("k-means needs k distinct points", kmeans(&[vec![1.0], vec![1.0]], 2, 0, 3).is_err()));

    let t4 = [0, 0, 1, 1];
    checks.push(("purity identical = 1", close(purity(&t4, &t4).unwrap(), 1.0)));
    checks.push(("NMI identical = 1", close(nmi(&t4, &t4).unwrap(), 1.0)));
    checks.push(("purity by hand = 0.75", close(purity(&[0, 0, 0, 1], &t4).unwrap(), 0.75)));
    checks.push(("NMI single cluster = 0", close(nmi(&[0, 0, 0, 0], &t4).unwrap(), 0.0)));
    checks.push(("purity/NMI empty rejected", purity(&[], &[]).is_err() && nmi(&[], &[]).is_err()));

    checks.push(("accuracy perfect = 1", close(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0)));
    checks.push(("micro-F1 perfect = 1", close(micro_f1(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0)));
    checks.push(("accuracy by hand = 2/3", close(accuracy(&[0, 0, 1], &[0, 1, 1]).unwrap(), 2.0 / 3.0)));
    checks.push(("micro-F1 = accuracy", close(micro_f1(&[0, 0, 1], &[0, 1, 1]).unwrap(), 2.0 / 3.0)));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        "metric unit examples",
        failed.is_empty(),
        format!("{} of {} hold; failing: {failed:?}", checks.len() - failed.len(), checks.len()),
    );
}
