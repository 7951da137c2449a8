//! Entropic optimal transport between topics and keyword groups.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{KeywordGroups, Vocabulary};
use crate::error::{invalid, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;
/// Below this entropy weight the scaling runs on log potentials.
pub const LOG_DOMAIN_BELOW: f64 = 0.05;

/// `C[t, s] = -(1/|s|) sum_{x in s} ln E[t, x]`, for keyword indices already
/// resolved against the vocabulary. Takes `ln E`.
pub fn cost_matrix_from_indices(log_e: &Array2<f64>, groups: &[Vec<usize>]) -> Result<Array2<f64>> {
    let (m, v) = log_e.dim();
    let mut c = Array2::zeros((m, groups.len()));
    for (s, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(invalid(format!("keyword group {s} is empty")));
        }
        if let Some(&bad) = group.iter().find(|&&x| x >= v) {
            return Err(invalid(format!("keyword index {bad} outside vocabulary of size {v}")));
        }
        let w = 1.0 / group.len() as f64;
        for t in 0..m {
            c[[t, s]] = -w * group.iter().map(|&x| log_e[[t, x]]).sum::<f64>();
        }
    }
    Ok(c)
}

/// Cost matrix from a topic-word matrix `E` and named keyword groups.
pub fn cost_matrix(e: &Array2<f64>, groups: &KeywordGroups, vocab: &Vocabulary) -> Result<Array2<f64>> {
    if e.ncols() != vocab.len() {
        return Err(invalid("topic-word matrix width differs from vocabulary size"));
    }
    cost_matrix_from_indices(&e.mapv(f64::ln), &groups.indices(vocab)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: Array2<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute row- or column-marginal violation.
    pub marginal_error: f64,
}

/// Uniform marginals with totals `min(|T|, |S|)`; unit sums when square.
pub fn default_marginals(rows: usize, cols: usize) -> (Array1<f64>, Array1<f64>) {
    let total = rows.min(cols) as f64;
    (
        Array1::from_elem(rows, total / rows as f64),
        Array1::from_elem(cols, total / cols as f64),
    )
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn marginal_error(p: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let rows = p.sum_axis(ndarray::Axis(1));
    let cols = p.sum_axis(ndarray::Axis(0));
    rows.iter()
        .zip(a)
        .chain(cols.iter().zip(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Entropic OT plan `P = diag(u) exp(-C/eps) diag(v)` by alternating scaling.
/// Runs in the log domain whenever `eps < 0.05`. If scaling has not converged
/// after a few hundred sweeps, a Newton solve of the dual is attempted from the
/// current potentials. Non-convergence within `max_iter` is reported through
/// `converged`, not as an error.
pub fn sinkhorn(
    c: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    opts: &SinkhornOptions,
) -> Result<TransportPlan> {
    let (n, m) = c.dim();
    if n == 0 || m == 0 || a.len() != n || b.len() != m {
        return Err(invalid("sinkhorn: shape mismatch"));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(invalid("sinkhorn: epsilon must be positive"));
    }
    if a.iter().chain(b).any(|&v| !(v > 0.0)) {
        return Err(invalid("sinkhorn: marginals must be positive"));
    }
    if (a.sum() - b.sum()).abs() > 1e-9 * a.sum().max(1.0) {
        return Err(invalid("sinkhorn: marginal totals differ"));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sinkhorn: non-finite cost"));
    }
    let eps = opts.epsilon;
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut iterations = 0;
    let mut converged = false;
    let mut g = Array1::<f64>::zeros(m);
    if eps < LOG_DOMAIN_BELOW {
        while iterations < opts.max_iter {
            iterations += 1;
            let f = row_potentials(c, &log_a, &g, eps);
            g = col_potentials(c, &log_b, &f, eps);
            let f = row_potentials(c, &log_a, &g, eps);
            if col_residual(c, b, &f, &g, eps).iter().all(|r| r.abs() < opts.tol) {
                converged = true;
                break;
            }
            if iterations % POLISH_EVERY == 0 {
                if let Some((g2, used)) = newton_polish(c, &log_a, b, &g, eps, opts.tol) {
                    g = g2;
                    iterations += used;
                    converged = true;
                    break;
                }
            }
        }
    } else {
        let k = c.mapv(|v| (-v / eps).exp());
        let mut v = Array1::<f64>::ones(m);
        while iterations < opts.max_iter {
            iterations += 1;
            let u = a / &k.dot(&v);
            v = b / &k.t().dot(&u);
            let u = a / &k.dot(&v);
            let cols = &v * &k.t().dot(&u);
            if cols.iter().zip(b).all(|(x, y)| (x - y).abs() < opts.tol) {
                converged = true;
                break;
            }
            if iterations % POLISH_EVERY == 0 {
                let g0 = v.mapv(|x| eps * x.ln());
                if let Some((g2, used)) = newton_polish(c, &log_a, b, &g0, eps, opts.tol) {
                    v = g2.mapv(|x| (x / eps).exp());
                    iterations += used;
                    converged = true;
                    break;
                }
            }
        }
        g = v.mapv(|x| eps * x.ln());
    }
    let f = row_potentials(c, &log_a, &g, eps);
    let plan = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
    let marginal_error = marginal_error(&plan, a, b);
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sinkhorn: non-finite plan"));
    }
    Ok(TransportPlan {
        plan,
        epsilon: eps,
        iterations,
        converged,
        marginal_error,
    })
}

/// Sinkhorn iterations between attempts at a Newton solve of the dual.
const POLISH_EVERY: usize = 200;
const NEWTON_STEPS: usize = 60;

/// Exact row scaling in log space: `f_i = eps ln a_i - eps LSE_j((g_j - C_ij)/eps)`.
fn row_potentials(c: &Array2<f64>, log_a: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Array1<f64> {
    Array1::from_shape_fn(c.nrows(), |i| {
        eps * log_a[i] - eps * log_sum_exp((0..c.ncols()).map(|j| (g[j] - c[[i, j]]) / eps))
    })
}

fn col_potentials(c: &Array2<f64>, log_b: &Array1<f64>, f: &Array1<f64>, eps: f64) -> Array1<f64> {
    Array1::from_shape_fn(c.ncols(), |j| {
        eps * log_b[j] - eps * log_sum_exp((0..c.nrows()).map(|i| (f[i] - c[[i, j]]) / eps))
    })
}

fn col_residual(c: &Array2<f64>, b: &Array1<f64>, f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Array1<f64> {
    Array1::from_shape_fn(c.ncols(), |j| {
        (0..c.nrows()).map(|i| ((f[i] + g[j] - c[[i, j]]) / eps).exp()).sum::<f64>() - b[j]
    })
}

/// Newton's method on the column potentials with rows scaled exactly, for the
/// near-permutation regime where plain scaling contracts very slowly. The last
/// potential is pinned to remove the additive gauge. Returns `None` unless the
/// column residual falls below `tol`.
fn newton_polish(
    c: &Array2<f64>,
    log_a: &Array1<f64>,
    b: &Array1<f64>,
    g0: &Array1<f64>,
    eps: f64,
    tol: f64,
) -> Option<(Array1<f64>, usize)> {
    let (n, m) = c.dim();
    if m < 2 {
        return None;
    }
    let a = log_a.mapv(f64::exp);
    let mut g = g0.clone();
    let mut f = row_potentials(c, log_a, &g, eps);
    let mut r = col_residual(c, b, &f, &g, eps);
    let norm = |r: &Array1<f64>| r.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for step in 1..=NEWTON_STEPS {
        let p = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
        let k = m - 1;
        let mut jac = Array2::<f64>::zeros((k, k + 1));
        for j in 0..k {
            let col: f64 = p.column(j).sum();
            for l in 0..k {
                let cross: f64 = (0..n).map(|i| p[[i, j]] * p[[i, l]] / a[i]).sum();
                jac[[j, l]] = (if j == l { col } else { 0.0 } - cross) / eps;
            }
            jac[[j, k]] = -r[j];
        }
        // Components of the plan's support that underflowed to zero make the
        // Jacobian singular; a tiny ridge keeps the solve defined there.
        let scale = (0..k).map(|j| jac[[j, j]].abs()).fold(0.0, f64::max);
        for j in 0..k {
            jac[[j, j]] += 1e-13 * scale;
        }
        let delta = solve_augmented(jac)?;
        let before = norm(&r);
        let mut t = 1.0;
        loop {
            let mut trial = g.clone();
            for j in 0..k {
                trial[j] += t * delta[j];
            }
            let tf = row_potentials(c, log_a, &trial, eps);
            let tr = col_residual(c, b, &tf, &trial, eps);
            if norm(&tr) < before || t < 1e-6 {
                g = trial;
                f = tf;
                r = tr;
                break;
            }
            t *= 0.5;
        }
        if norm(&r) < tol {
            return Some((g, step));
        }
        if t < 1e-6 {
            return None;
        }
    }
    None
}

/// Gaussian elimination with partial pivoting on `[A | b]`.
fn solve_augmented(mut aug: Array2<f64>) -> Option<Vec<f64>> {
    let k = aug.nrows();
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| aug[[x, col]].abs().total_cmp(&aug[[y, col]].abs()))?;
        if aug[[piv, col]].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..=k {
                aug.swap([piv, j], [col, j]);
            }
        }
        for row in (col + 1)..k {
            let factor = aug[[row, col]] / aug[[col, col]];
            if factor != 0.0 {
                for j in col..=k {
                    aug[[row, j]] -= factor * aug[[col, j]];
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = ((row + 1)..k).map(|j| aug[[row, j]] * x[j]).sum();
        x[row] = (aug[[row, k]] - s) / aug[[row, row]];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Sinkhorn with the default uniform marginals.
pub fn sinkhorn_uniform(c: &Array2<f64>, opts: &SinkhornOptions) -> Result<TransportPlan> {
    let (a, b) = default_marginals(c.nrows(), c.ncols());
    sinkhorn(c, &a, &b, opts)
}

/// `h(P) = -sum P ln P`, zero at permutation matrices.
pub fn plan_entropy(p: &Array2<f64>) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `<P, C> - eps h(P)`. With the plan held fixed, `dL/dC = P`.
pub fn ot_loss(c: &Array2<f64>, p: &Array2<f64>, epsilon: f64) -> f64 {
    (c * p).sum() - epsilon * plan_entropy(p)
}

pub fn ot_loss_grad(p: &Array2<f64>) -> Array2<f64> {
    p.clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `assignment[t]` is the keyword group matched to topic `t`.
    pub assignment: Vec<usize>,
    /// Largest entrywise gap between the plan and the permutation matrix.
    pub plan_gap: f64,
}

impl Matching {
    /// Inverse map: `topic_of_group[s]`.
    pub fn topic_of_group(&self) -> Vec<usize> {
        let mut inv = vec![0; self.assignment.len()];
        for (t, &s) in self.assignment.iter().enumerate() {
            inv[s] = t;
        }
        inv
    }

    pub fn permutation_matrix(&self) -> Array2<f64> {
        let n = self.assignment.len();
        let mut p = Array2::zeros((n, n));
        for (t, &s) in self.assignment.iter().enumerate() {
            p[[t, s]] = 1.0;
        }
        p
    }
}

/// Repeatedly takes the largest remaining entry and removes its row and
/// column. Ties go to the lowest topic index, then the lowest group index.
pub fn round_to_matching(p: &Array2<f64>) -> Result<Matching> {
    let assignment = greedy(p, |a, b| a > b)?;
    let perm = permutation(&assignment);
    let plan_gap = (p - &perm).iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(Matching { assignment, plan_gap })
}

/// Greedy lowest-cost matching (the cross-entropy variant's "highest
/// similarity" pairing), same tie rule as [`round_to_matching`].
pub fn greedy_min_cost_matching(c: &Array2<f64>) -> Result<Vec<usize>> {
    greedy(c, |a, b| a < b)
}

fn greedy(x: &Array2<f64>, better: impl Fn(f64, f64) -> bool) -> Result<Vec<usize>> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(invalid("matching requires a square matrix"));
    }
    let mut assignment = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    for _ in 0..n {
        let mut best: Option<(usize, usize)> = None;
        for t in (0..n).filter(|&t| assignment[t] == usize::MAX) {
            for s in (0..n).filter(|&s| !col_used[s]) {
                if best.is_none_or(|(bt, bs)| better(x[[t, s]], x[[bt, bs]])) {
                    best = Some((t, s));
                }
            }
        }
        let (t, s) = best.expect("a free cell remains");
        assignment[t] = s;
        col_used[s] = true;
    }
    Ok(assignment)
}

fn permutation(assignment: &[usize]) -> Array2<f64> {
    Matching {
        assignment: assignment.to_vec(),
        plan_gap: 0.0,
    }
    .permutation_matrix()
}

pub fn matching_cost(c: &Array2<f64>, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(t, &s)| c[[t, s]]).sum()
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Exhaustive minimum-cost perfect matching; first permutation in
/// lexicographic order wins ties.
pub fn brute_force_matching(c: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(invalid("brute-force matching requires a square matrix"));
    }
    if n == 0 || n > 8 {
        return Err(invalid(format!("brute-force matching supports 1..=8 rows, got {n}")));
    }
    let mut best = (Vec::new(), f64::INFINITY);
    for perm in permutations(n) {
        let cost = matching_cost(c, &perm);
        if cost < best.1 {
            best = (perm, cost);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCondition {
    pub t: usize,
    pub t_other: usize,
    /// `C[t,s'] + C[t',s] - C[t,s] - C[t',s']`; non-negative when the pair
    /// has no profitable exchange.
    pub slack: f64,
    pub holds: bool,
}

/// Pairwise exchange condition `C[t,s] + C[t',s'] <= C[t,s'] + C[t',s]` for
/// every pair of matched `(t, s)`, `(t', s')`.
pub fn check_lemma_condition(c: &Array2<f64>, assignment: &[usize]) -> Result<Vec<PairCondition>> {
    let n = assignment.len();
    if c.nrows() != n || c.ncols() != n {
        return Err(invalid("assignment size differs from the cost matrix"));
    }
    let mut seen = vec![false; n];
    for &s in assignment {
        if s >= n || std::mem::replace(&mut seen[s], true) {
            return Err(invalid("assignment is not a bijection"));
        }
    }
    let mut out = Vec::new();
    for t in 0..n {
        for t2 in (t + 1)..n {
            let (s, s2) = (assignment[t], assignment[t2]);
            let slack = c[[t, s2]] + c[[t2, s]] - c[[t, s]] - c[[t2, s2]];
            out.push(PairCondition {
                t,
                t_other: t2,
                slack,
                holds: slack >= -1e-12,
            });
        }
    }
    Ok(out)
}

/// JSON-serializable record of one matching step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportDiagnostics {
    pub cost: Array2<f64>,
    pub plan: TransportPlan,
    pub matching: Matching,
    pub lemma: Vec<PairCondition>,
}

pub fn diagnose(c: &Array2<f64>, opts: &SinkhornOptions) -> Result<TransportDiagnostics> {
    let plan = sinkhorn_uniform(c, opts)?;
    let matching = round_to_matching(&plan.plan)?;
    let lemma = check_lemma_condition(c, &matching.assignment)?;
    Ok(TransportDiagnostics {
        cost: c.clone(),
        plan,
        matching,
        lemma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cost_examples() {
        let log_e = array![[0.5f64, 0.25, 0.25]].mapv(f64::ln);
        let c = cost_matrix_from_indices(&log_e, &[vec![0]]).unwrap();
        assert!((c[[0, 0]] - 2f64.ln()).abs() < 1e-15);
        let c = cost_matrix_from_indices(&log_e, &[vec![0, 1, 1]]).unwrap();
        let want = -(0.5f64.ln() + 2.0 * 0.25f64.ln()) / 3.0;
        assert!((c[[0, 0]] - want).abs() < 1e-15);
        let u = Array2::from_elem((3, 100), 0.01f64).mapv(f64::ln);
        let c = cost_matrix_from_indices(&u, &[vec![1, 2], vec![50]]).unwrap();
        assert!(c.iter().all(|v| (v - 4.605170185988091).abs() < 1e-12));
        assert!(cost_matrix_from_indices(&u, &[vec![100]]).is_err());
    }

    #[test]
    fn constant_cost_gives_uniform_plan() {
        for eps in [0.01, 0.5] {
            let p = sinkhorn_uniform(&Array2::from_elem((3, 3), 2.0), &SinkhornOptions { epsilon: eps, ..Default::default() })
                .unwrap();
            assert!(p.plan.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn anti_cost_gives_identity() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        let p = sinkhorn_uniform(&c, &SinkhornOptions::default()).unwrap();
        assert!(p.converged);
        assert!(p.plan[[0, 1]] < 1e-10 && p.plan[[1, 0]] < 1e-10);
        assert!((p.plan[[0, 0]] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn marginals_hold_on_random_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..7 {
            for eps in [1.0f64, 0.1, 0.01, 0.001] {
                let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 3.0);
                let p = sinkhorn_uniform(&c, &SinkhornOptions { epsilon: eps, ..Default::default() }).unwrap();
                assert!(p.converged, "n={n} eps={eps}");
                assert!(p.marginal_error < 1e-8);
            }
        }
        let c = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64);
        let p = sinkhorn_uniform(&c, &SinkhornOptions::default()).unwrap();
        assert!(p.marginal_error < 1e-8);
        assert!((p.plan.sum() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn loss_examples_and_gradient() {
        let c = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(ot_loss(&c, &array![[0.0, 1.0], [1.0, 0.0]], 0.01), 5.0);
        let k = Array2::from_elem((2, 2), 1.5f64);
        let half = Array2::from_elem((2, 2), 0.5f64);
        assert!(((&k * &half).sum() - 3.0).abs() < 1e-15);
        let p = array![[0.7, 0.3], [0.3, 0.7]];
        let g = ot_loss_grad(&p);
        for i in 0..2 {
            for j in 0..2 {
                let h = 1e-6;
                let mut up = c.clone();
                up[[i, j]] += h;
                let mut dn = c.clone();
                dn[[i, j]] -= h;
                let fd = (ot_loss(&up, &p, 0.01) - ot_loss(&dn, &p, 0.01)) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() <= 1e-6 * g[[i, j]]);
            }
        }
    }

    #[test]
    fn rounding_examples() {
        let m = round_to_matching(&Array2::eye(3)).unwrap();
        assert_eq!(m.assignment, vec![0, 1, 2]);
        assert_eq!(m.plan_gap, 0.0);
        let m = round_to_matching(&array![[0.9, 0.1], [0.1, 0.9]]).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
        assert!((m.plan_gap - 0.1).abs() < 1e-15);
        let m = round_to_matching(&Array2::from_elem((2, 2), 0.5)).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
        assert_eq!(m.plan_gap, 0.5);
        assert_eq!(greedy_min_cost_matching(&array![[5.0, 1.0], [2.0, 9.0]]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_matching(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap(), (vec![0, 1], 0.0));
        assert_eq!(brute_force_matching(&array![[5.0, 1.0], [2.0, 9.0]]).unwrap(), (vec![1, 0], 3.0));
        assert!(brute_force_matching(&Array2::zeros((9, 9))).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Array2::from_shape_fn((5, 5), |_| rng.random::<f64>());
        let (_, best) = brute_force_matching(&c).unwrap();
        assert!(best <= matching_cost(&c, &[0, 1, 2, 3, 4]));
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn lemma_examples() {
        let ok = check_lemma_condition(&array![[1.0, 3.0], [4.0, 2.0]], &[0, 1]).unwrap();
        assert!(ok[0].holds);
        let bad = check_lemma_condition(&array![[3.0, 1.0], [2.0, 4.0]], &[0, 1]).unwrap();
        assert!(!bad[0].holds);
        assert!(check_lemma_condition(&Array2::zeros((2, 2)), &[0, 0]).is_err());
    }
}
