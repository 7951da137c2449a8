use ndarray::Array2;
use proptest::prelude::*;
use spheretopic::corpus::{split_indices, tokenize};
use spheretopic::embedding::EmbeddingMatrix;
use spheretopic::evaluation::{diversity, nmi, purity, spearman};
use spheretopic::geometry::{mean_resultant_length, sample_vmf_seeded, vmf_kl_to_uniform, VmfParams};
use spheretopic::model::{softmax, ModelConfig, TopicModelState};
use spheretopic::snapshot;
use spheretopic::transport::{
    brute_force_matching, default_marginals, greedy_min_cost_matching, matching_cost, round_to_matching, sinkhorn,
    SinkhornOptions,
};

fn labels(max_len: usize, classes: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..classes, 2..max_len)
}

fn paired_labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..40).prop_flat_map(|n| (prop::collection::vec(0..5usize, n), prop::collection::vec(0..4usize, n)))
}

fn cost(max: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max, 2..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(0.0..1.0f64, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn square_cost(max: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max).prop_flat_map(|n| {
        prop::collection::vec(0.0..1.0f64, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_scores_ignore_label_names((pred, truth) in paired_labels(), shift in 1usize..7) {
        let renamed: Vec<usize> = pred.iter().map(|&p| (p + shift) * 3).collect();
        prop_assert!((purity(&pred, &truth).unwrap() - purity(&renamed, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&renamed, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&truth, &pred).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cluster_scores_are_bounded((pred, truth) in paired_labels()) {
        let p = purity(&pred, &truth).unwrap();
        let n = nmi(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&n));
    }

    #[test]
    fn a_labeling_agrees_with_itself(truth in labels(40, 6)) {
        prop_assert_eq!(purity(&truth, &truth).unwrap(), 1.0);
        prop_assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diversity_lies_between_one_over_m_and_one(
        topics in prop::collection::vec(prop::collection::vec(0..30usize, 5), 1..8),
        k in 1usize..=5,
    ) {
        let topics: Vec<Vec<usize>> = topics
            .into_iter()
            .map(|t| {
                let mut seen = Vec::new();
                for w in t.into_iter().chain(100..) {
                    if !seen.contains(&w) {
                        seen.push(w);
                    }
                    if seen.len() == 5 {
                        break;
                    }
                }
                seen
            })
            .collect();
        let d = diversity(&topics, k).unwrap();
        let m = topics.len() as f64;
        prop_assert!(d >= 1.0 / m - 1e-12 && d <= 1.0 + 1e-12, "{d}");
    }

    #[test]
    fn sinkhorn_respects_marginals(c in cost(6), eps in 0.05f64..1.0) {
        let (a, b) = default_marginals(c.nrows(), c.ncols());
        let opts = SinkhornOptions { epsilon: eps, ..SinkhornOptions::default() };
        let plan = sinkhorn(&c, &a, &b, &opts).unwrap();
        prop_assert!(plan.converged);
        prop_assert!(plan.marginal_error < 1e-6);
        prop_assert!(plan.plan.iter().all(|&p| p >= 0.0));
        let rows = plan.plan.sum_axis(ndarray::Axis(1));
        let cols = plan.plan.sum_axis(ndarray::Axis(0));
        for (x, y) in rows.iter().zip(&a) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        for (x, y) in cols.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rounding_yields_a_permutation(c in square_cost(6), eps in 0.05f64..1.0) {
        let (a, b) = default_marginals(c.nrows(), c.ncols());
        let opts = SinkhornOptions { epsilon: eps, ..SinkhornOptions::default() };
        let plan = sinkhorn(&c, &a, &b, &opts).unwrap();
        let m = round_to_matching(&plan.plan).unwrap();
        let mut sorted = m.assignment.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..c.nrows()).collect::<Vec<_>>());
    }

    #[test]
    fn brute_force_never_loses_to_greedy(c in square_cost(5)) {
        let (best, cost) = brute_force_matching(&c).unwrap();
        prop_assert!((matching_cost(&c, &best) - cost).abs() < 1e-12);
        let greedy = greedy_min_cost_matching(&c).unwrap();
        prop_assert!(cost <= matching_cost(&c, &greedy) + 1e-12);
    }

    #[test]
    fn kl_to_uniform_grows_with_kappa(m in 2usize..60, k in 0.01f64..500.0, dk in 0.01f64..50.0) {
        let lo = vmf_kl_to_uniform(m, k);
        let hi = vmf_kl_to_uniform(m, k + dk);
        prop_assert!(lo >= -1e-12);
        prop_assert!(hi > lo, "m={m} k={k}: {lo} vs {hi}");
    }

    #[test]
    fn resultant_length_is_an_increasing_fraction(m in 2usize..60, k in 0.01f64..500.0, dk in 0.01f64..50.0) {
        let lo = mean_resultant_length(m, k);
        let hi = mean_resultant_length(m, k + dk);
        prop_assert!(lo > 0.0 && hi < 1.0);
        prop_assert!(hi > lo);
    }

    #[test]
    fn vmf_samples_are_unit_vectors(mu in prop::collection::vec(-1.0f64..1.0, 2..12), kappa in 0.0f64..1000.0, seed: u64) {
        prop_assume!(mu.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mu: Vec<f64> = mu.iter().map(|v| v / norm).collect();
        let s = sample_vmf_seeded(&VmfParams::new(mu, kappa).unwrap(), seed).unwrap();
        let len = s.eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((len - 1.0).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s.w));
    }

    #[test]
    fn softmax_lands_on_the_simplex(s in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let p = softmax(&s);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let i = s.iter().position(|&v| v == top).unwrap();
        prop_assert!(p.iter().all(|&v| v <= p[i]));
    }

    #[test]
    fn tokenizing_tokens_is_a_fixed_point(text in "\\PC{0,80}") {
        let tokens = tokenize(&text);
        prop_assert!(tokens.iter().all(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_lowercase())));
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
    }

    #[test]
    fn split_partitions_the_index_range(n in 1usize..200, frac in 0.0f64..1.0, seed: u64) {
        let (train, test) = split_indices(n, frac, seed);
        prop_assert!(!train.is_empty());
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, frac, seed), (train, test));
    }

    #[test]
    fn spearman_sees_only_ranks(x in prop::collection::vec(-10.0f64..10.0, 3..30), seed in 0u64..1000) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * ((i as u64 * 7 + seed) % 5) as f64).collect();
        prop_assume!(x.windows(2).any(|w| w[0] != w[1]) && y.windows(2).any(|w| w[0] != w[1]));
        let r = spearman(&x, &y).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        let warped: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        prop_assert!((spearman(&warped, &y).unwrap() - r).abs() < 1e-12);
        prop_assert!((spearman(&y, &x).unwrap() - r).abs() < 1e-12);
        prop_assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn snapshots_round_trip_byte_for_byte(
        topics in 2usize..6,
        words in 4usize..40,
        dim in 2usize..8,
        hidden in prop::collection::vec(1usize..12, 1..3),
        seed: u64,
    ) {
        let config = ModelConfig { num_topics: topics, hidden_sizes: hidden, embedding_dim: dim, seed, ..ModelConfig::default() };
        let emb = EmbeddingMatrix::random(words, dim, seed).unwrap();
        let state = TopicModelState::new(config, emb, "feedfacecafebeef").unwrap();
        let bytes = snapshot::to_bytes(&state).unwrap();
        let back = snapshot::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.vocab_hash, "feedfacecafebeef");
        prop_assert_eq!(snapshot::to_bytes(&back).unwrap(), bytes.clone());
        prop_assert!(snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
