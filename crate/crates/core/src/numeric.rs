//! Small numerical kernels shared across the crate: log-factorials, stable
//! softplus/log-sum-exp, the normal CDF, bisection and golden-section search.

use std::sync::OnceLock;

use statrs::function::{erf, gamma};

const LOG_FACTORIAL_TABLE: usize = 1 << 14;

fn log_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LOG_FACTORIAL_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for i in 1..LOG_FACTORIAL_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`, tabulated below 16384 and via `ln Γ(n+1)` above.
pub fn ln_factorial(n: usize) -> f64 {
    match log_factorial_table().get(n) {
        Some(&v) => v,
        None => gamma::ln_gamma(n as f64 + 1.0),
    }
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `k ln r + (n-k) ln(1-r)` with the `0 ln 0 = 0` convention.
pub fn ln_bernoulli_weight(n: usize, k: usize, r: f64) -> f64 {
    let a = if k == 0 { 0.0 } else { k as f64 * r.ln() };
    let b = if k == n { 0.0 } else { (n - k) as f64 * (-r).ln_1p() };
    a + b
}

/// Natural log of the binomial pmf `C(n,k) r^k (1-r)^(n-k)`.
pub fn ln_binomial_pmf(n: usize, k: usize, r: f64) -> f64 {
    ln_choose(n, k) + ln_bernoulli_weight(n, k, r)
}

/// `ln Σ exp(x_i)`, returning `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)`, overflow-safe.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Largest point of `[lo, hi]` where `pred` holds, given `pred(lo)` and
/// `!pred(hi)` and a single switch between them.
pub fn bisect_last_true<F: FnMut(f64) -> bool>(mut lo: f64, mut hi: f64, tol: f64, mut pred: F) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `m + 1` evenly spaced points from `lo` to `hi` inclusive, where `m` is
/// `(hi - lo) / spacing` rounded to the nearest integer (at least 1).
pub fn uniform_grid(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let m = (((hi - lo) / spacing).round() as usize).max(1);
    let step = (hi - lo) / m as f64;
    (0..=m).map(|i| if i == m { hi } else { lo + step * i as f64 }).collect()
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Returns `(x_min, f_min)`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut a: f64, mut b: f64, tol: f64, mut f: F) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // endpoints of the final bracket can beat the midpoint on flat functions
    [(x, fx), (c, fc), (d, fd)].into_iter().fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}
