//! Small numerical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::{beta, gamma};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `P(|N(0,1)| > t)`.
pub fn normal_two_sided_tail(t: f64) -> f64 {
    libm::erfc(t / std::f64::consts::SQRT_2)
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn beta_fn(a: f64, b: f64) -> f64 {
    beta::beta(a, b)
}

/// `E|N(0,1)|^p = 2^{p/2} Γ((p+1)/2) / sqrt(pi)`.
pub fn normal_abs_moment(p: f64) -> f64 {
    (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
        - 0.5 * std::f64::consts::PI.ln())
    .exp()
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `sum_{k >= start} k^{-s}` for `s > 1`, `start >= 1`, via a direct head and
/// an Euler-Maclaurin remainder.
pub fn power_tail_sum(s: f64, start: u64) -> f64 {
    assert!(s > 1.0 && start >= 1);
    let head_len = 64u64;
    let m = (start + head_len) as f64;
    let head: f64 = (start..start + head_len).map(|k| (k as f64).powf(-s)).sum();
    // Euler-Maclaurin from m to infinity
    let rem = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0;
    head + rem
}

/// Mean and batch-means standard error with `batches` contiguous batches.
pub fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(2);
    if n < 2 {
        return (mean, f64::NAN);
    }
    let size = n / b;
    let used = size * b;
    let means: Vec<f64> = values[..used]
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    (mean, (var / b as f64).sqrt())
}

/// Sample mean and classical standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimate of `(E|Y|^p)^{1/p}` from samples of `|Y|^p`, with a batch-means
/// standard error propagated through the `1/p` root (delta method).
pub fn lp_root_estimate(abs_pow: &[f64], p: f64, batches: usize) -> (f64, f64) {
    let (m, se) = batch_mean_se(abs_pow, batches);
    if m == 0.0 {
        return (0.0, 0.0);
    }
    let est = m.powf(1.0 / p);
    (est, est / (p * m) * se)
}

/// `f(0), ..., f(reps - 1)` evaluated in parallel, collected in index order.
pub fn replicate<T: Send>(reps: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..reps).into_par_iter().map(f).collect()
}
