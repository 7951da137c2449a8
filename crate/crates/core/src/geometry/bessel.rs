//! Modified Bessel function of the first kind, evaluated in log space.

use crate::error::{invalid, Result};

/// Relative truncation threshold for both expansions.
const TAIL: f64 = 1e-17;
const MAX_TERMS: usize = 100_000;

/// `ln I_nu(x)` for `nu >= 0`, `x >= 0`.
///
/// Large arguments (`x >= 200` and `x >= 2 nu^2`) use the Hankel asymptotic
/// expansion; everything else sums the power series outward from its largest
/// term, so neither branch overflows.
pub fn log_bessel_i(nu: f64, x: f64) -> Result<f64> {
    if nu.is_nan() || x.is_nan() {
        return Err(invalid("log_bessel_i: NaN argument"));
    }
    if nu < 0.0 || x < 0.0 {
        return Err(invalid(format!(
            "log_bessel_i: expected nu >= 0 and x >= 0, got nu = {nu}, x = {x}"
        )));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(log_bessel_i_unchecked(nu, x))
}

pub(crate) fn log_bessel_i_unchecked(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x >= 200.0 && x >= 2.0 * nu * nu {
        if let Some(v) = hankel(nu, x) {
            return v;
        }
    }
    series(nu, x)
}

/// `I_{nu+1}(x) / I_nu(x)`.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (log_bessel_i_unchecked(nu + 1.0, x) - log_bessel_i_unchecked(nu, x)).exp()
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    // t_{k+1}/t_k = q / ((k+1)(k+1+nu)) drops below one past this index.
    let peak = ((-nu + (nu * nu + x * x).sqrt()) * 0.5).floor().max(0.0) as usize;
    let kp = peak as f64;
    let log_peak = (2.0 * kp + nu) * half.ln() - ln_gamma(kp + 1.0) - ln_gamma(kp + nu + 1.0);

    let mut sum = 1.0;
    let mut r = 1.0;
    let mut k = kp;
    for _ in 0..MAX_TERMS {
        r *= q / ((k + 1.0) * (k + 1.0 + nu));
        sum += r;
        if r < TAIL * sum {
            break;
        }
        k += 1.0;
    }
    let mut r = 1.0;
    let mut k = kp;
    while k >= 1.0 {
        r *= k * (k + nu) / q;
        sum += r;
        if r < TAIL * sum {
            break;
        }
        k -= 1.0;
    }
    log_peak + sum.ln()
}

/// `I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k`; `None` when the
/// divergent tail is reached before the terms are negligible.
fn hankel(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
        let mag = term.abs();
        if mag > prev {
            return None;
        }
        sum += term;
        if mag < TAIL * sum.abs() {
            return Some(x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
        prev = mag;
    }
    None
}
