//! Brute-force grid references for the bisection-based inversions.
//!
//! Each oracle returns the largest point of a uniform grid of spacing
//! `1e-6 · (hi - lo)` that satisfies the defining predicate, found by a
//! `1e-3` scan followed by a full fine scan of the last accepted coarse cell.
//! The predicates are written out directly rather than calling the library
//! functions they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::convex_delta::ConvexDeltaParams;
use crate::inversion::invert_bound;
use crate::scalar_bounds::{binomial_tail_inverse, catoni_inverse, kl_inverse_upper, BoundBudget, Risk};

const COARSE: usize = 1_000;
const FINE_PER_COARSE: usize = 1_000;

/// Largest fine-grid point of `[lo, hi]` where `pred` holds, assuming the
/// accepted set is an interval at least one coarse cell wide or containing `lo`.
pub fn grid_sup<F: Fn(f64) -> bool>(lo: f64, hi: f64, pred: F) -> Option<f64> {
    let coarse = |i: usize| if i == COARSE { hi } else { lo + (hi - lo) * i as f64 / COARSE as f64 };
    let last = (0..=COARSE).rev().find(|&i| pred(coarse(i)))?;
    if last == COARSE {
        return Some(hi);
    }
    let fine_total = COARSE * FINE_PER_COARSE;
    let fine = |j: usize| lo + (hi - lo) * j as f64 / fine_total as f64;
    let start = last * FINE_PER_COARSE;
    let best = (start..start + FINE_PER_COARSE).rev().find(|&j| pred(fine(j))).unwrap_or(start);
    Some(fine(best))
}

fn bernoulli_kl(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// `sup { p in [q, 1] : kl(q, p) <= c }`.
pub fn kl_inverse_upper_oracle(q: f64, c: f64) -> f64 {
    grid_sup(q, 1.0, |p| bernoulli_kl(q, p) <= c).unwrap_or(q)
}

/// `sup { p in [0, 1] : P[Bin(m, p) <= k] >= δ }`.
pub fn binomial_tail_inverse_oracle(m: usize, k: usize, delta: f64) -> f64 {
    let cdf = |p: f64| {
        if p >= 1.0 {
            return if k >= m { 1.0 } else { 0.0 };
        }
        Binomial::new(p, m as u64).expect("valid binomial").cdf(k as u64)
    };
    grid_sup(0.0, 1.0, |p| cdf(p) >= delta).unwrap_or(0.0)
}

/// `sup { p in [0, 1] : -ln(1 - p (1 - e^{-β})) - β q <= α }`, or 1 if empty.
pub fn catoni_inverse_oracle(q: f64, alpha: f64, beta: f64) -> f64 {
    let scale = 1.0 - (-beta).exp();
    grid_sup(0.0, 1.0, |p| -(1.0 - p * scale).ln() - beta * q <= alpha).unwrap_or(1.0)
}

/// `sup { p in [0, 1] : f(p) <= c }`, or 1 if empty.
pub fn invert_bound_oracle<F: Fn(f64) -> f64>(f: F, c: f64) -> f64 {
    grid_sup(0.0, 1.0, |p| f(p) <= c).unwrap_or(1.0)
}

/// Worst disagreement of one library function with its oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_abs_error: f64,
    /// Inputs of the worst case, for diagnostics.
    pub worst_case: String,
}

impl OracleReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_abs_error <= tolerance
    }
}

fn report<I, G>(name: &'static str, cases: usize, rng: &mut ChaCha8Rng, mut draw: G) -> OracleReport
where
    G: FnMut(&mut ChaCha8Rng) -> (f64, f64, I),
    I: std::fmt::Debug,
{
    let mut out = OracleReport { name, cases, max_abs_error: 0.0, worst_case: String::new() };
    for _ in 0..cases {
        let (value, reference, inputs) = draw(rng);
        let err = (value - reference).abs();
        if !(err <= out.max_abs_error) {
            out.max_abs_error = err;
            out.worst_case = format!("{inputs:?}: library {value}, oracle {reference}");
        }
    }
    out
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Compares `kl_inverse_upper`, `binomial_tail_inverse`, `catoni_inverse`
/// and `invert_bound` with their oracles on `cases` random inputs each.
pub fn run_oracle_suite(seed: u64, cases: usize) -> Vec<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kl = report("kl_inverse_upper", cases, &mut rng, |rng| {
        let q = rng.random_range(0.0..1.0);
        let c = log_uniform(rng, 1e-6, 5.0);
        (kl_inverse_upper(Risk::clamped(q), c).get(), kl_inverse_upper_oracle(q, c), (q, c))
    });
    let binomial = report("binomial_tail_inverse", cases, &mut rng, |rng| {
        let m = rng.random_range(1..=500usize);
        let k = rng.random_range(0..=m);
        let delta = log_uniform(rng, 1e-4, 1.0);
        let value = binomial_tail_inverse(m, k, delta).expect("valid inputs").get();
        (value, binomial_tail_inverse_oracle(m, k, delta), (m, k, delta))
    });
    let catoni = report("catoni_inverse", cases, &mut rng, |rng| {
        let q = rng.random_range(0.0..1.0);
        let kl = log_uniform(rng, 1e-4, 20.0);
        let n = rng.random_range(1..=200usize);
        let beta = log_uniform(rng, 0.05, 20.0);
        let budget = BoundBudget::new(kl, n, 0.1).expect("valid budget");
        let value = catoni_inverse(Risk::clamped(q), &budget, beta).get();
        (value, catoni_inverse_oracle(q, budget.alpha(), beta), (q, kl, n, beta))
    });
    let convex = report("invert_bound", cases, &mut rng, |rng| {
        let hidden = rng.random_range(1..=16usize);
        let params = ConvexDeltaParams::init(hidden, rng);
        let q = rng.random_range(0.0..1.0);
        let p0 = rng.random_range(0.0..1.0);
        let c = params.eval(q, p0) + rng.random_range(0.01..0.5);
        let value = invert_bound(&params, q, c).get();
        (value, invert_bound_oracle(|p| params.eval(q, p), c), (hidden, q, c))
    });
    vec![kl, binomial, catoni, convex]
}
