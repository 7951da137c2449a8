//! Self-contained numerical oracle suites, runnable from the command line.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evaluation::{diversity, micro_f1, nmi, npmi, purity, NPMI_EPS};
use crate::geometry::{
    log_bessel_i, max_softmax_on_sphere, mean_resultant_length, sample_vmf, vmf_kl_to_uniform, vmf_log_density,
    vmf_log_normalizer, VmfParams,
};
use crate::transport::{
    brute_force_matching, check_lemma_condition, cost_matrix_from_indices, matching_cost, permutations,
    round_to_matching, sinkhorn_uniform, SinkhornOptions,
};

pub const SUITES: &[&str] = &["geometry", "transport", "metrics"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn close(name: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        Self::new(name, (got - want).abs() <= tol, format!("got {got:.12}, want {want:.12}, tol {tol:e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match name {
        "geometry" => geometry_suite(seed)?,
        "transport" => transport_suite(seed)?,
        "metrics" => metrics_suite()?,
        other => return Err(invalid(format!("unknown suite `{other}`; expected one of {SUITES:?}"))),
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        passed: checks.iter().all(|c| c.passed),
        seconds: start.elapsed().as_secs_f64(),
        checks,
    })
}

/// Monte-Carlo estimate of `KL(vMF(mu, kappa) || uniform)` as the sample mean
/// of `ln q(z) - ln p(z)`, with its standard error.
pub fn kl_monte_carlo(m: usize, kappa: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut mu = vec![0.0; m];
    mu[0] = 1.0;
    let params = VmfParams::new(mu, kappa)?;
    let uniform = vmf_log_normalizer(m, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let z = sample_vmf(&params, &mut rng)?.eta;
        let v = vmf_log_density(&z, &params)? - uniform;
        sum += v;
        sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    Ok((mean, ((sq / n - mean * mean).max(0.0) / n).sqrt()))
}

/// Sample mean of `mu^T z`.
pub fn sampled_resultant_length(m: usize, kappa: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut mu = vec![0.0; m];
    mu[m - 1] = 1.0;
    let params = VmfParams::new(mu, kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..samples {
        sum += sample_vmf(&params, &mut rng)?.eta[m - 1];
    }
    Ok(sum / samples as f64)
}

fn geometry_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    // Arbitrary-precision reference values.
    for (nu, x, want) in [
        (0.5, 1.0, -0.0643519910735318),
        (4.0, 2.0, -2.9812660166599048),
        (49.0, 100.0, 84.944_980_103_953_91),
        (0.0, 700.0, 695.805_699_998_443_4),
    ] {
        out.push(Check::close(format!("ln I_{nu}({x})"), log_bessel_i(nu, x)?, want, 1e-9 * want.abs().max(1.0)));
    }
    for k in [0.5f64, 2.0, 10.0] {
        let closed = (k / (4.0 * std::f64::consts::PI * k.sinh())).ln();
        out.push(Check::close(format!("ln C_3({k}) closed form"), vmf_log_normalizer(3, k), closed, 1e-6));
        let a = 1.0 / k.tanh() - 1.0 / k;
        out.push(Check::close(format!("A_3({k}) = coth k - 1/k"), mean_resultant_length(3, k), a, 1e-6));
    }
    for (i, &(m, k)) in [(3usize, 1.0f64), (10, 10.0), (25, 100.0)].iter().enumerate() {
        let exact = vmf_kl_to_uniform(m, k);
        let (mc, se) = kl_monte_carlo(m, k, 1_000_000, seed.wrapping_add(i as u64))?;
        out.push(Check::new(
            format!("KL(M={m}, kappa={k}) vs Monte-Carlo"),
            (exact - mc).abs() <= 0.02 * exact,
            format!("exact {exact:.6}, MC {mc:.6} ± {se:.6}"),
        ));
    }
    for (i, &(m, k)) in [(3usize, 2.0f64), (10, 10.0), (25, 100.0)].iter().enumerate() {
        let a = mean_resultant_length(m, k);
        let got = sampled_resultant_length(m, k, 100_000, seed.wrapping_add(100 + i as u64))?;
        out.push(Check::new(
            format!("sampler resultant length (M={m}, kappa={k})"),
            (got - a).abs() <= 0.01 * a,
            format!("sampled {got:.6}, A_M {a:.6}"),
        ));
    }
    out.push(Check::close("max softmax on sphere (10, 1)", max_softmax_on_sphere(10, 1.0)?, 0.2418, 1e-3));
    let high = max_softmax_on_sphere(10, 10.0)?;
    out.push(Check::new("max softmax on sphere (10, 10) >= 0.999", high >= 0.999, format!("{high}")));
    Ok(out)
}

/// A random cost instance whose brute-force optimal matching is the identity,
/// with every exchange margin and the gap to the second-best matching at
/// least `margin`.
#[derive(Debug, Clone)]
pub struct TheoremCase {
    pub topic_word: Array2<f64>,
    pub groups: Vec<Vec<usize>>,
    pub cost: Array2<f64>,
}

/// Draws topic-word matrices (rows are softmaxes of random logits with a few
/// boosted words per topic) and keyword groups until one qualifies, then
/// relabels topics so that the optimum is the identity.
pub fn theorem_case<R: Rng>(rng: &mut R, n: usize, vocab: usize, margin: f64) -> Result<TheoremCase> {
    if !(2..=8).contains(&n) || vocab < 2 * n {
        return Err(invalid("theorem cases need 2 <= n <= 8 and vocab >= 2n"));
    }
    for _ in 0..10_000 {
        let mut logits = Array2::from_shape_fn((n, vocab), |_| rng.random_range(-1.0..1.0));
        let groups: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..vocab)).collect())
            .collect();
        for t in 0..n {
            let s = rng.random_range(0..n);
            for &w in &groups[s] {
                logits[[t, w]] += rng.random_range(0.0..3.0);
            }
        }
        let mut e = logits.mapv(f64::exp);
        for mut row in e.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let cost = cost_matrix_from_indices(&e.mapv(f64::ln), &groups)?;
        let (best, best_cost) = brute_force_matching(&cost)?;
        // Row s of the relabelled matrices holds the topic matched to group s.
        let mut order = vec![0; n];
        for (t, &s) in best.iter().enumerate() {
            order[s] = t;
        }
        let e = e.select(ndarray::Axis(0), &order);
        let cost = cost.select(ndarray::Axis(0), &order);
        let identity: Vec<usize> = (0..n).collect();
        let pairs_ok = check_lemma_condition(&cost, &identity)?.iter().all(|p| p.slack >= margin);
        let second = permutations(n)
            .into_iter()
            .filter(|p| *p != identity)
            .map(|p| matching_cost(&cost, &p))
            .fold(f64::INFINITY, f64::min);
        if pairs_ok && second - best_cost >= margin {
            return Ok(TheoremCase {
                topic_word: e,
                groups,
                cost,
            });
        }
    }
    Err(invalid("no qualifying cost matrix found"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub cases: usize,
    pub failures: Vec<String>,
    pub max_cost_error: f64,
    pub seconds: f64,
}

/// For each case the Sinkhorn plan at `epsilon` must round to the identity
/// and its transport cost must equal the trace of `C` within `tol`.
pub fn theorem_harness(cases: usize, epsilon: f64, tol: f64, seed: u64) -> Result<HarnessReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut max_err: f64 = 0.0;
    let opts = SinkhornOptions {
        epsilon,
        ..SinkhornOptions::default()
    };
    for i in 0..cases {
        let n = 2 + i % 5;
        let vocab = rng.random_range((2 * n).max(10)..=30);
        let case = theorem_case(&mut rng, n, vocab, 0.1)?;
        let plan = sinkhorn_uniform(&case.cost, &opts)?;
        let matching = round_to_matching(&plan.plan)?;
        let transported: f64 = (&plan.plan * &case.cost).sum();
        let trace: f64 = (0..n).map(|t| case.cost[[t, t]]).sum();
        let err = (transported - trace).abs();
        max_err = max_err.max(err);
        let identity: Vec<usize> = (0..n).collect();
        if matching.assignment != identity || err > tol || !plan.converged {
            failures.push(format!(
                "case {i} (n={n}): assignment {:?}, |<P,C> - tr C| = {err:e}, converged {}",
                matching.assignment, plan.converged
            ));
        }
    }
    Ok(HarnessReport {
        cases,
        failures,
        max_cost_error: max_err,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every brute-force optimal matching on random cost matrices must satisfy
/// the pairwise exchange condition.
pub fn lemma_harness(cases: usize, seed: u64) -> Result<HarnessReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let n = 2 + i % 5;
        let c = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..10.0));
        let (best, _) = brute_force_matching(&c)?;
        for p in check_lemma_condition(&c, &best)? {
            worst = worst.min(p.slack);
            if !p.holds {
                failures.push(format!("case {i}: pair ({}, {}) slack {}", p.t, p.t_other, p.slack));
            }
        }
    }
    Ok(HarnessReport {
        cases,
        failures,
        max_cost_error: -worst,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn transport_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let c = ndarray::arr2(&[[0.3, 2.0, 1.1], [1.5, 0.2, 0.9], [0.7, 1.2, 0.1]]);
    for eps in [1.0, 0.1, 0.01, 0.001] {
        let plan = sinkhorn_uniform(
            &c,
            &SinkhornOptions {
                epsilon: eps,
                ..SinkhornOptions::default()
            },
        )?;
        let rows = plan.plan.sum_axis(ndarray::Axis(1));
        let cols = plan.plan.sum_axis(ndarray::Axis(0));
        let err = rows.iter().chain(cols.iter()).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        out.push(Check::new(
            format!("Sinkhorn marginals at eps={eps}"),
            plan.converged && err <= 1e-8,
            format!("max marginal error {err:e} after {} sweeps", plan.iterations),
        ));
    }
    let t = theorem_harness(100, 1e-3, 1e-6, seed)?;
    out.push(Check::new(
        "plan rounds to the optimal matching with equal cost (100 cases)",
        t.failures.is_empty() && t.seconds < 10.0,
        format!("{} failures, max cost error {:e}, {:.2}s", t.failures.len(), t.max_cost_error, t.seconds),
    ));
    let l = lemma_harness(100, seed ^ 0x4c45)?;
    out.push(Check::new(
        "optimal matchings satisfy the exchange condition (100 cases)",
        l.failures.is_empty(),
        format!("{} failures", l.failures.len()),
    ));
    Ok(out)
}

fn metrics_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let a: Vec<usize> = (0..25).collect();
    let b: Vec<usize> = (25..50).collect();
    out.push(Check::close("diversity of disjoint topics", diversity(&[a.clone(), b], 25)?, 1.0, 1e-9));
    out.push(Check::close("diversity of identical topics", diversity(&[a.clone(), a], 25)?, 0.5, 1e-9));
    let truth = [0, 0, 1, 1];
    out.push(Check::close("purity by hand", purity(&[0, 0, 0, 1], &truth)?, 0.75, 1e-9));
    out.push(Check::close("purity of a perfect clustering", purity(&truth, &truth)?, 1.0, 1e-9));
    out.push(Check::close("NMI of a relabelled clustering", nmi(&[3, 3, 1, 1], &truth)?, 1.0, 1e-9));
    out.push(Check::close("NMI of a single cluster", nmi(&[0, 0, 0, 0], &truth)?, 0.0, 1e-9));
    out.push(Check::close("micro-F1 of a perfect prediction", micro_f1(&[0, 1, 2], &[0, 1, 2])?, 1.0, 1e-9));
    out.push(Check::close("micro-F1 equals accuracy", micro_f1(&[0, 0, 1], &[0, 1, 1])?, 2.0 / 3.0, 1e-9));
    let streams: Vec<Vec<usize>> = (0..30).flat_map(|_| [vec![0, 1, 3], vec![2, 4, 4]]).collect();
    let together = npmi(&[vec![0, 1]], &streams, 10, 2, NPMI_EPS)?.score;
    out.push(Check::close("NPMI of always co-occurring words", together, 1.0, 1e-9));
    let apart = npmi(&[vec![0, 2]], &streams, 10, 2, NPMI_EPS)?.score;
    let want = (NPMI_EPS / 0.25).ln() / -NPMI_EPS.ln();
    out.push(Check::close("NPMI of never co-occurring words", apart, want, 1e-9));
    Ok(out)
}
