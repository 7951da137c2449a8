//! Latent-distribution mathematics on the unit hypersphere: the von
//! Mises-Fisher density and its KL divergence to the uniform sphere, a
//! reparameterizable sampler, the diagonal Gaussian baseline, and the
//! softmax expressibility bound.

mod bessel;

pub use bessel::{bessel_ratio, log_bessel_i};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const UNIT_TOL: f64 = 1e-6;
pub const MAX_PROPOSALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    pub mu: Vec<f64>,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self> {
        if mu.len() < 2 {
            return Err(invalid("vMF needs dimension >= 2"));
        }
        let n = norm(&mu);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("vMF mean direction has norm {n}, expected 1")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(invalid(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { mu, kappa })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sigma.len() {
            return Err(invalid("gaussian mu and log_sigma lengths differ"));
        }
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(invalid("gaussian parameters must be finite"));
        }
        Ok(Self { mu, log_sigma })
    }
}

/// Per-sample randomness kept so the sample can be recomputed, and
/// differentiated, as a deterministic function of the distribution parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentNoise {
    Vmf {
        /// Accepted Beta((M-1)/2, (M-1)/2) draw.
        beta: f64,
        /// Uniform direction on S^{M-2}.
        tangent: Vec<f64>,
        /// Number of proposals used by the rejection loop.
        proposals: usize,
    },
    Gaussian {
        eps: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub eta: Vec<f64>,
    pub aux: LatentNoise,
    /// Marginal coordinate along mu (vMF only).
    pub w: f64,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln C_M(kappa)`, with `C_M(kappa) = kappa^{M/2-1} / ((2 pi)^{M/2} I_{M/2-1}(kappa))`.
pub fn vmf_log_normalizer(m: usize, kappa: f64) -> f64 {
    log_uniform_density(m) + log_normalizer_excess(m, kappa)
}

/// Log-density of the uniform distribution on S^{M-1}: `ln(Gamma(M/2) / (2 pi^{M/2}))`.
pub fn log_uniform_density(m: usize) -> f64 {
    let h = m as f64 / 2.0;
    libm::lgamma(h) - std::f64::consts::LN_2 - h * std::f64::consts::PI.ln()
}

/// `ln C_M(kappa) - ln C_M(0) = -ln[ Gamma(nu+1) I_nu(kappa) / (kappa/2)^nu ]`, `nu = M/2 - 1`.
fn log_normalizer_excess(m: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let nu = m as f64 / 2.0 - 1.0;
    if kappa < 1.0 {
        // Normalized series 1 + sum_k (kappa^2/4)^k Gamma(nu+1) / (k! Gamma(nu+k+1)).
        let q = kappa * kappa / 4.0;
        let mut term = 1.0;
        let mut tail = 0.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= q / (kf * (nu + kf));
            tail += term;
            if term < 1e-18 * tail {
                break;
            }
        }
        return -tail.ln_1p();
    }
    nu * (kappa / 2.0).ln() - libm::lgamma(nu + 1.0) - bessel::log_bessel_i_unchecked(nu, kappa)
}

/// Mean resultant length `A_M(kappa) = I_{M/2}(kappa) / I_{M/2-1}(kappa) = E[mu^T z]`.
pub fn mean_resultant_length(m: usize, kappa: f64) -> f64 {
    bessel_ratio(m as f64 / 2.0 - 1.0, kappa)
}

pub fn vmf_log_density(z: &[f64], params: &VmfParams) -> Result<f64> {
    if z.len() != params.dim() {
        return Err(invalid("vmf_log_density: dimension mismatch"));
    }
    let n = norm(z);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("vmf_log_density: |z| = {n}, expected 1")));
    }
    Ok(vmf_log_normalizer(params.dim(), params.kappa) + params.kappa * dot(&params.mu, z))
}

/// `KL(vMF(mu, kappa) || U(S^{M-1})) = kappa A_M(kappa) + ln C_M(kappa) - ln C_M(0)`.
pub fn vmf_kl_to_uniform(m: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    (kappa * mean_resultant_length(m, kappa) + log_normalizer_excess(m, kappa)).max(0.0)
}

/// `d KL / d kappa = kappa (1 - A^2) - (M - 1) A`, from `A' = 1 - A^2 - (M-1) A / kappa`.
pub fn vmf_kl_grad_kappa(m: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let a = mean_resultant_length(m, kappa);
    kappa * (1.0 - a * a) - (m as f64 - 1.0) * a
}

/// `-1/2 sum_i (1 + 2 ln sigma_i - mu_i^2 - sigma_i^2)`.
pub fn gaussian_kl_to_standard(params: &GaussianParams) -> f64 {
    params
        .mu
        .iter()
        .zip(&params.log_sigma)
        .map(|(&m, &ls)| -0.5 * (1.0 + 2.0 * ls - m * m - (2.0 * ls).exp()))
        .sum()
}

/// Wood's rejection parameter `b` and its derivative in kappa.
fn wood_b(m: usize, kappa: f64) -> (f64, f64) {
    let m1 = m as f64 - 1.0;
    let s = (4.0 * kappa * kappa + m1 * m1).sqrt();
    let den = s + 2.0 * kappa;
    let b = m1 / den;
    let db = -m1 * (4.0 * kappa / s + 2.0) / (den * den);
    (b, db)
}

fn wood_w(beta: f64, b: f64) -> f64 {
    (1.0 - (1.0 + b) * beta) / (1.0 - (1.0 - b) * beta)
}

/// Draws the vMF noise: the accepted marginal Beta variate and a tangent direction.
pub fn draw_vmf_noise<R: Rng + ?Sized>(m: usize, kappa: f64, rng: &mut R) -> Result<LatentNoise> {
    if m < 2 {
        return Err(invalid("vMF sampling needs M >= 2"));
    }
    let m1 = m as f64 - 1.0;
    let (b, _) = wood_b(m, kappa);
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m1 * (1.0 - x0 * x0).ln();
    let beta_dist = Beta::new(m1 / 2.0, m1 / 2.0).map_err(|e| invalid(e.to_string()))?;
    let mut accepted = None;
    for proposal in 1..=MAX_PROPOSALS {
        let z: f64 = beta_dist.sample(rng);
        let w = wood_w(z, b);
        let u: f64 = rng.random();
        if kappa * w + m1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            accepted = Some((z, proposal));
            break;
        }
    }
    let (beta, proposals) = accepted.ok_or(Error::RejectionLimit(MAX_PROPOSALS))?;
    let tangent = random_unit_vector(rng, m - 1);
    Ok(LatentNoise::Vmf {
        beta,
        tangent,
        proposals,
    })
}

/// Standard-normal vector projected to the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Householder reflection taking `e_1` to `mu`, applied to `y`.
pub fn householder_to(mu: &[f64], y: &[f64]) -> Vec<f64> {
    let mut u = mu.iter().map(|v| -v).collect::<Vec<_>>();
    u[0] += 1.0;
    let uu = dot(&u, &u);
    if uu < 1e-24 {
        return y.to_vec();
    }
    let coef = 2.0 * dot(&u, y) / uu;
    y.iter().zip(&u).map(|(yi, ui)| yi - coef * ui).collect()
}

/// Point on the sphere around `e_1` determined by the marginal `w` and tangent.
fn frame_point(w: f64, tangent: &[f64]) -> Vec<f64> {
    let r = (1.0 - w * w).max(0.0).sqrt();
    std::iter::once(w).chain(tangent.iter().map(|t| r * t)).collect()
}

/// Deterministic vMF sample for given noise.
pub fn vmf_sample_from_noise(params: &VmfParams, noise: &LatentNoise) -> Result<LatentSample> {
    let LatentNoise::Vmf { beta, tangent, .. } = noise else {
        return Err(invalid("vMF sample requires vMF noise"));
    };
    if tangent.len() + 1 != params.dim() {
        return Err(invalid("tangent dimension mismatch"));
    }
    let (b, _) = wood_b(params.dim(), params.kappa);
    let w = wood_w(*beta, b);
    let y = frame_point(w, tangent);
    Ok(LatentSample {
        eta: householder_to(&params.mu, &y),
        aux: noise.clone(),
        w,
    })
}

pub fn sample_vmf<R: Rng + ?Sized>(params: &VmfParams, rng: &mut R) -> Result<LatentSample> {
    let noise = draw_vmf_noise(params.dim(), params.kappa, rng)?;
    vmf_sample_from_noise(params, &noise)
}

pub fn sample_vmf_seeded(params: &VmfParams, seed: u64) -> Result<LatentSample> {
    sample_vmf(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Pulls `d loss / d eta` back to the mean direction and concentration, holding
/// the accepted Beta variate and tangent fixed. The rejection-correction term of
/// the accept-reject gradient is omitted.
pub fn vmf_sample_backward(
    params: &VmfParams,
    sample: &LatentSample,
    grad_eta: &[f64],
) -> (Vec<f64>, f64) {
    let LatentNoise::Vmf { beta, tangent, .. } = &sample.aux else {
        panic!("vmf_sample_backward called with non-vMF noise");
    };
    let m = params.dim();
    let w = sample.w;
    let y = frame_point(w, tangent);

    // eta = y - (2 d / s) u,  u = e1 - mu, s = u.u, d = u.y
    let mut u: Vec<f64> = params.mu.iter().map(|v| -v).collect();
    u[0] += 1.0;
    let s = dot(&u, &u);
    let (grad_mu, grad_y) = if s < 1e-24 {
        (vec![0.0; m], grad_eta.to_vec())
    } else {
        let d = dot(&u, &y);
        let gu = dot(grad_eta, &u);
        // d eta / d u contracted with g
        let grad_u: Vec<f64> = (0..m)
            .map(|i| -(2.0 / s) * (y[i] * gu + d * grad_eta[i]) + 4.0 * d * gu / (s * s) * u[i])
            .collect();
        // H is symmetric: grad_y = H g
        let coef = 2.0 * gu / s;
        let grad_y: Vec<f64> = grad_eta.iter().zip(&u).map(|(g, ui)| g - coef * ui).collect();
        (grad_u.iter().map(|g| -g).collect(), grad_y)
    };

    let r2 = 1.0 - w * w;
    let dr_dw = if r2 > 1e-300 { -w / r2.sqrt() } else { 0.0 };
    let grad_w = grad_y[0] + dr_dw * dot(&grad_y[1..], tangent);
    let (b, db) = wood_b(m, params.kappa);
    let den = 1.0 - (1.0 - b) * beta;
    let dw_db = -2.0 * beta * (1.0 - beta) / (den * den);
    (grad_mu, grad_w * dw_db * db)
}

/// `d/d kappa ln pi(beta | kappa)`, the score of the accepted Beta variate.
///
/// The accepted variate has density `g(h(beta, kappa)) |dh/dbeta|` where `g` is
/// the vMF marginal of `w`. Multiplying a loss by this score gives the
/// rejection-correction term of the accept-reject gradient; it has zero mean.
pub fn vmf_noise_score(params: &VmfParams, sample: &LatentSample) -> f64 {
    let LatentNoise::Vmf { beta, .. } = &sample.aux else {
        panic!("vmf_noise_score called with non-vMF noise");
    };
    let m = params.dim();
    let kappa = params.kappa;
    let w = sample.w;
    let (b, db) = wood_b(m, kappa);
    let den = 1.0 - (1.0 - b) * beta;
    let dw_dk = -2.0 * beta * (1.0 - beta) / (den * den) * db;
    let a = mean_resultant_length(m, kappa);
    let r2 = (1.0 - w * w).max(1e-300);
    let d_target = -a + w + (kappa - (m as f64 - 3.0) * w / r2) * dw_dk;
    let d_jacobian = db * (1.0 / b - 2.0 * beta / den);
    d_target + d_jacobian
}

pub fn draw_gaussian_noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> LatentNoise {
    LatentNoise::Gaussian {
        eps: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

pub fn gaussian_sample_from_noise(params: &GaussianParams, noise: &LatentNoise) -> Result<LatentSample> {
    let LatentNoise::Gaussian { eps } = noise else {
        return Err(invalid("gaussian sample requires gaussian noise"));
    };
    if eps.len() != params.mu.len() {
        return Err(invalid("gaussian noise dimension mismatch"));
    }
    let eta = params
        .mu
        .iter()
        .zip(&params.log_sigma)
        .zip(eps)
        .map(|((m, ls), e)| m + ls.exp() * e)
        .collect();
    Ok(LatentSample {
        eta,
        aux: noise.clone(),
        w: 0.0,
    })
}

pub fn sample_gaussian<R: Rng + ?Sized>(params: &GaussianParams, rng: &mut R) -> Result<LatentSample> {
    let noise = draw_gaussian_noise(params.mu.len(), rng);
    gaussian_sample_from_noise(params, &noise)
}

pub fn sample_gaussian_seeded(params: &GaussianParams, seed: u64) -> Result<LatentSample> {
    sample_gaussian(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Returns `(d/d mu, d/d log_sigma)`.
pub fn gaussian_sample_backward(
    params: &GaussianParams,
    sample: &LatentSample,
    grad_eta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let LatentNoise::Gaussian { eps } = &sample.aux else {
        panic!("gaussian_sample_backward called with non-gaussian noise");
    };
    let grad_ls = grad_eta
        .iter()
        .zip(&params.log_sigma)
        .zip(eps)
        .map(|((g, ls), e)| g * ls.exp() * e)
        .collect();
    (grad_eta.to_vec(), grad_ls)
}

/// Unit vector maximizing the first softmax coordinate: `(a, b, ..., b)` with
/// `a = sqrt((M-1)/M)`, `b = -a/(M-1)`.
pub fn softmax_argmax_direction(m: usize) -> Vec<f64> {
    let a = ((m as f64 - 1.0) / m as f64).sqrt();
    let b = -a / (m as f64 - 1.0);
    std::iter::once(a).chain(std::iter::repeat_n(b, m - 1)).collect()
}

/// Largest coordinate softmax(radius * eta) can reach over unit vectors eta:
/// `1 / (1 + (M-1) exp(-radius sqrt(M/(M-1))))`.
pub fn max_softmax_on_sphere(m: usize, radius: f64) -> Result<f64> {
    if m < 2 {
        return Err(invalid("max_softmax_on_sphere needs M >= 2"));
    }
    if !(radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let mf = m as f64;
    Ok(1.0 / (1.0 + (mf - 1.0) * (-radius * (mf / (mf - 1.0)).sqrt()).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn uniform_density_at_zero_kappa() {
        for m in [2usize, 3, 7, 20] {
            let mu = unit((0..m).map(|i| i as f64 + 1.0).collect());
            let p = VmfParams::new(mu.clone(), 0.0).unwrap();
            let want = libm::lgamma(m as f64 / 2.0) - (2.0 * PI.powf(m as f64 / 2.0)).ln();
            let got = vmf_log_density(&mu, &p).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
        // S^2 has area 4 pi.
        assert!((log_uniform_density(3) + (4.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn three_dimensional_closed_form() {
        // C_3(kappa) = kappa / (4 pi sinh kappa)
        let mu = vec![0.0, 0.0, 1.0];
        let p = VmfParams::new(mu.clone(), 1.0).unwrap();
        let want = (1.0 / (4.0 * PI * 1f64.sinh())).ln() + 1.0;
        assert!((vmf_log_density(&mu, &p).unwrap() - want).abs() < 1e-12);
        assert!((want - (-1.6924636085404864)).abs() < 1e-12);
        for &k in &[0.01f64, 0.5, 3.0, 30.0, 300.0] {
            let closed = if k > 20.0 {
                // ln(k/(4 pi sinh k)) without overflow
                k.ln() - (2.0 * PI).ln() - k - (-(-2.0 * k).exp()).ln_1p()
            } else {
                (k / (4.0 * PI * k.sinh())).ln()
            };
            assert!((vmf_log_normalizer(3, k) - closed).abs() < 1e-9, "kappa {k}");
            let a = 1.0 / k.tanh() - 1.0 / k;
            assert!((mean_resultant_length(3, k) - a).abs() < 1e-9);
        }
    }

    #[test]
    fn non_unit_z_rejected() {
        let p = VmfParams::new(vec![1.0, 0.0, 0.0], 2.0).unwrap();
        assert!(vmf_log_density(&[0.5, 0.0, 0.0], &p).is_err());
        assert!(VmfParams::new(vec![2.0, 0.0], 1.0).is_err());
        assert!(VmfParams::new(vec![1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn kl_reference_values() {
        // 40-digit mpmath evaluations of kappa A + ln C(kappa) - ln C(0).
        let cases = [
            (3, 1.0, 0.15159592392813567),
            (3, 10.0, 1.9957323168382172),
            (3, 100.0, 4.298_317_366_548_036),
            (10, 1.0, 0.049_384_755_313_357_22),
            (10, 10.0, 2.4844695867839593),
            (10, 100.0, 11.350216203714512),
            (25, 1.0, 0.01995569131717361),
            (25, 10.0, 1.6573346658673877),
            (25, 100.0, 18.802477040208456),
        ];
        for (m, k, want) in cases {
            let got = vmf_kl_to_uniform(m, k);
            assert!((got - want).abs() < 1e-9 * want.max(1.0), "M={m} k={k}: {got} vs {want}");
        }
        assert_eq!(vmf_kl_to_uniform(10, 0.0), 0.0);
    }

    #[test]
    fn kl_monotone_and_small_kappa_stable() {
        for m in [2usize, 3, 10, 25, 60] {
            let mut prev = 0.0;
            for i in 1..400 {
                let k = 1e-4 * 1.05f64.powi(i);
                let kl = vmf_kl_to_uniform(m, k);
                assert!(kl >= prev - 1e-15, "M={m} k={k}");
                prev = kl;
            }
        }
        // Leading order: KL ~ kappa^2 / (2M)
        let k = 1e-3;
        assert!((vmf_kl_to_uniform(10, k) / (k * k / 20.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kl_gradient_matches_finite_difference() {
        for (m, k) in [(10usize, 5.0f64), (3, 0.7), (25, 40.0), (10, 400.0)] {
            let h = 1e-5 * k.max(1.0);
            let fd = (vmf_kl_to_uniform(m, k + h) - vmf_kl_to_uniform(m, k - h)) / (2.0 * h);
            let an = vmf_kl_grad_kappa(m, k);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "M={m} k={k}: {an} vs {fd}");
        }
        assert!((vmf_kl_grad_kappa(10, 5.0) - 0.305_627_990_398_023_3).abs() < 1e-10);
    }

    #[test]
    fn mean_resultant_length_increasing() {
        for m in [3usize, 10, 25] {
            let mut prev = 0.0;
            for i in 1..300 {
                let a = mean_resultant_length(m, i as f64 * 0.7);
                assert!(a > prev);
                prev = a;
            }
        }
    }

    #[test]
    fn gaussian_kl_examples() {
        let z = GaussianParams::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert_eq!(gaussian_kl_to_standard(&z), 0.0);
        let p = GaussianParams::new(vec![1.0, -1.0], vec![0.0, 0.0]).unwrap();
        assert!((gaussian_kl_to_standard(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn householder_is_isometry_and_maps_e1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [2usize, 5, 17] {
            let mu = random_unit_vector(&mut rng, m);
            let mut e1 = vec![0.0; m];
            e1[0] = 1.0;
            let img = householder_to(&mu, &e1);
            for (a, b) in img.iter().zip(&mu) {
                assert!((a - b).abs() < 1e-12);
            }
            for _ in 0..20 {
                let x: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
                let hx = householder_to(&mu, &x);
                assert!((norm(&hx) - norm(&x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn samples_unit_norm_and_reproducible() {
        let p = VmfParams::new(unit(vec![1.0, 2.0, -0.5, 0.3]), 7.0).unwrap();
        let a = sample_vmf_seeded(&p, 9).unwrap();
        let b = sample_vmf_seeded(&p, 9).unwrap();
        assert_eq!(a.eta, b.eta);
        assert!((norm(&a.eta) - 1.0).abs() < 1e-12);

        let g = GaussianParams::new(vec![0.5, -0.5], vec![f64::NEG_INFINITY.max(-800.0); 2]).unwrap();
        let s = sample_gaussian_seeded(&g, 1).unwrap();
        assert_eq!(s.eta, vec![0.5, -0.5]);
    }

    #[test]
    fn three_dimensional_sampler_mean() {
        // E[mu^T z] = coth 2 - 1/2 for M = 3, kappa = 2.
        let p = VmfParams::new(vec![0.0, 1.0, 0.0], 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_vmf(&p, &mut rng).unwrap().eta[1])
            .sum::<f64>()
            / n as f64;
        assert!((mean - (1.0 / 2f64.tanh() - 0.5)).abs() < 0.01, "{mean}");
    }

    #[test]
    fn uniform_and_concentrated_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = VmfParams::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let n = 100_000;
        let mut acc = vec![0.0; 5];
        for _ in 0..n {
            let s = sample_vmf(&p, &mut rng).unwrap();
            for (a, e) in acc.iter_mut().zip(&s.eta) {
                *a += e / n as f64;
            }
        }
        assert!(norm(&acc) < 0.02);

        let p = VmfParams::new(unit(vec![1.0; 10]), 1000.0).unwrap();
        let cos: Vec<f64> = (0..10_000)
            .map(|_| dot(&sample_vmf(&p, &mut rng).unwrap().eta, &p.mu))
            .collect();
        assert!(cos.iter().all(|&c| c > 0.98));
        let mean = cos.iter().sum::<f64>() / cos.len() as f64;
        assert!((mean - mean_resultant_length(10, 1000.0)).abs() < 1e-4);
    }

    #[test]
    fn expressibility_bound() {
        assert!((max_softmax_on_sphere(10, 1.0).unwrap() - 0.24174578181871204).abs() < 1e-12);
        assert!((max_softmax_on_sphere(10, 10.0).unwrap() - 0.9997621662882539).abs() < 1e-12);
        assert!((max_softmax_on_sphere(5, 3.0).unwrap() - 0.8773754333604531).abs() < 1e-12);
        assert!((max_softmax_on_sphere(7, 1e-9).unwrap() - 1.0 / 7.0).abs() < 1e-9);
        let d = softmax_argmax_direction(10);
        assert!((norm(&d) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = max_softmax_on_sphere(6, i as f64 * 0.3).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn vmf_backward_matches_finite_difference() {
        let m = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mu = random_unit_vector(&mut rng, m);
        let kappa = 8.0;
        let p = VmfParams::new(mu.clone(), kappa).unwrap();
        let noise = draw_vmf_noise(m, kappa, &mut rng).unwrap();
        let weights: Vec<f64> = (0..m).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
        // loss = weights . eta + 0.5 |eta|^2 along arbitrary (unnormalized) mu perturbations
        let loss = |mu: &[f64], k: f64| {
            let s = vmf_sample_from_noise(&VmfParams { mu: mu.to_vec(), kappa: k }, &noise).unwrap();
            dot(&weights, &s.eta) + 0.25 * s.eta[0].powi(3)
        };
        let s = vmf_sample_from_noise(&p, &noise).unwrap();
        let g: Vec<f64> = (0..m)
            .map(|i| weights[i] + if i == 0 { 0.75 * s.eta[0].powi(2) } else { 0.0 })
            .collect();
        let (gmu, gk) = vmf_sample_backward(&p, &s, &g);
        let h = 1e-6;
        for i in 0..m {
            let mut a = mu.clone();
            let mut b = mu.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a, kappa) - loss(&b, kappa)) / (2.0 * h);
            assert!((fd - gmu[i]).abs() < 1e-6, "mu[{i}]: {} vs {fd}", gmu[i]);
        }
        let fd = (loss(&mu, kappa + h) - loss(&mu, kappa - h)) / (2.0 * h);
        assert!((fd - gk).abs() < 1e-7, "kappa: {gk} vs {fd}");
    }

    #[test]
    fn noise_score_has_zero_mean_and_removes_kappa_bias() {
        // f(eta) = mu^T eta has E[f] = A_M(kappa), so dE/dkappa = A'(kappa).
        for (m, k) in [(4usize, 5.0f64), (10, 5.0), (10, 1.0)] {
            let mut mu = vec![0.0; m];
            mu[1] = 1.0;
            let p = VmfParams::new(mu.clone(), k).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let n = 200_000;
            let (mut score, mut rep, mut full, mut full2) = (0.0, 0.0, 0.0, 0.0);
            let a = mean_resultant_length(m, k);
            for _ in 0..n {
                let s = sample_vmf(&p, &mut rng).unwrap();
                let sc = vmf_noise_score(&p, &s);
                let (_, g) = vmf_sample_backward(&p, &s, &mu);
                let f = g + (dot(&mu, &s.eta) - a) * sc;
                score += sc;
                rep += g;
                full += f;
                full2 += f * f;
            }
            let nf = n as f64;
            let (score, rep, full) = (score / nf, rep / nf, full / nf);
            let se = ((full2 / nf - full * full) / nf).sqrt();
            let want = 1.0 - a * a - (m as f64 - 1.0) * a / k;
            assert!(score.abs() < 0.02, "M={m} k={k} score mean {score}");
            assert!((full - want).abs() < 4.0 * se, "M={m} k={k}: {full} vs {want} (se {se})");
            if k == 5.0 {
                assert!((rep - want).abs() > 4.0 * se, "pathwise part alone should be biased");
            }
        }
    }

}
