//! The moment term `I_Δ(N) = sup_r Σ_k C(N,k) r^k (1-r)^(N-k) e^{N Δ(k/N, r)}`,
//! evaluated as a maximum over a uniform `r`-grid with log-space summation
//! over `k`, and its parameter gradient for the convex family.

use rayon::prelude::*;

use crate::comparator::Comparator;
use crate::convex_delta::ConvexDeltaParams;
use crate::error::{Error, Result};
use crate::numeric::{ln_binomial_pmf, log_sum_exp};

/// Grids with at least this many points are scanned in parallel.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IDeltaResult {
    pub value: f64,
    pub log_value: f64,
    pub argmax_r: f64,
    pub grid_spacing: f64,
}

impl IDeltaResult {
    fn new(log_value: f64, argmax_r: f64, grid_spacing: f64) -> Self {
        IDeltaResult { value: log_value.exp(), log_value, argmax_r, grid_spacing }
    }
}

fn term_is_present(n: usize, k: usize, r: f64) -> bool {
    // 0^0 = 1: at the grid ends only the degenerate k carries mass
    !((r == 0.0 && k > 0) || (r == 1.0 && k < n))
}

/// `ln Σ_k C(n,k) r^k (1-r)^(n-k) e^{n Δ(k/n, r)}` at a single `r`.
pub fn log_moment_at<C: Comparator + ?Sized>(delta: &C, n: usize, r: f64) -> Result<f64> {
    let nf = n as f64;
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if !term_is_present(n, k, r) {
            continue;
        }
        let q = k as f64 / nf;
        let d = delta.eval(q, r);
        if !d.is_finite() {
            return Err(Error::NonFiniteDelta { q, r });
        }
        terms.push(ln_binomial_pmf(n, k, r) + nf * d);
    }
    Ok(log_sum_exp(&terms))
}

/// Point `j` of the uniform grid with `m` intervals on `[0, 1]`, bit-identical
/// to [`crate::numeric::uniform_grid`].
fn grid_point(m: usize, j: usize) -> f64 {
    if j == m {
        1.0
    } else {
        (1.0 / m as f64) * j as f64
    }
}

fn intervals_for(spacing: f64) -> Result<usize> {
    if !(spacing > 0.0 && spacing <= 1e-3) {
        return Err(Error::InvalidArgument(format!("r-grid spacing must lie in (0, 1e-3], got {spacing}")));
    }
    Ok((1.0 / spacing).round() as usize)
}

/// Log-moments at grid indices `lo..=hi` of the `m`-interval grid.
fn scan_indices<C: Comparator + ?Sized>(delta: &C, n: usize, m: usize, lo: usize, hi: usize) -> Result<Vec<f64>> {
    let f = |j: usize| log_moment_at(delta, n, grid_point(m, j));
    if hi - lo + 1 >= PARALLEL_THRESHOLD {
        (lo..=hi).into_par_iter().map(f).collect()
    } else {
        (lo..=hi).map(f).collect()
    }
}

/// Index of the largest value, the first one on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `I_Δ(n)` as the maximum over the uniform `r`-grid on `[0, 1]` with the
/// given spacing (endpoints included).
pub fn i_delta_eval<C: Comparator + ?Sized>(delta: &C, n: usize, spacing: f64) -> Result<IDeltaResult> {
    let m = intervals_for(spacing)?;
    let values = scan_indices(delta, n, m, 0, m)?;
    let j = argmax(&values);
    Ok(IDeltaResult::new(values[j], grid_point(m, j), 1.0 / m as f64))
}

/// A local maximum of the grid log-moment found by hill climbing from the
/// grid point nearest `start`. A lower bound on [`i_delta_eval`] at the same
/// spacing and equal to it when the log-moment is unimodal; used between
/// full scans while training, where the maximizer moves little per step.
pub fn i_delta_eval_local<C: Comparator + ?Sized>(
    delta: &C,
    n: usize,
    spacing: f64,
    start: f64,
) -> Result<IDeltaResult> {
    let m = intervals_for(spacing)?;
    let mut j = ((start.clamp(0.0, 1.0)) * m as f64).round() as usize;
    let at = |j: usize| log_moment_at(delta, n, grid_point(m, j));
    let mut here = at(j)?;
    for dir in [-1isize, 1] {
        loop {
            let next = j as isize + dir;
            if next < 0 || next > m as isize {
                break;
            }
            let v = at(next as usize)?;
            if v <= here {
                break;
            }
            here = v;
            j = next as usize;
        }
    }
    Ok(IDeltaResult::new(here, grid_point(m, j), 1.0 / m as f64))
}

/// The fine-grid maximum computed from a coarse scan: the coarse second
/// differences bound how far the log-moment can rise between coarse points,
/// and only coarse cells that could hold the fine maximum are rescanned at
/// the fine spacing. Falls back to a full fine scan when the fine grid does
/// not nest inside the coarse one.
pub fn i_delta_eval_refined<C: Comparator + ?Sized>(
    delta: &C,
    n: usize,
    coarse: f64,
    fine: f64,
) -> Result<IDeltaResult> {
    let mc = intervals_for(coarse)?;
    let mf = intervals_for(fine)?;
    if mf % mc != 0 || mc < 4 {
        return i_delta_eval(delta, n, fine);
    }
    let ratio = mf / mc;
    let coarse_values = scan_indices(delta, n, mc, 0, mc)?;
    let h = 1.0 / mc as f64;
    let curvature =
        coarse_values.windows(3).map(|w| ((w[0] - 2.0 * w[1] + w[2]) / (h * h)).abs()).fold(0.0f64, f64::max);
    // interpolation error of a C^2 function on a cell is at most M h^2 / 8;
    // the factor 4 absorbs curvature the coarse stencil underestimates
    let slack = 4.0 * curvature * h * h / 8.0 + 1e-9;
    let best_coarse = coarse_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut best = (f64::NEG_INFINITY, 0usize);
    for cell in 0..mc {
        let top = coarse_values[cell].max(coarse_values[cell + 1]);
        if top + slack < best_coarse {
            continue;
        }
        let values = scan_indices(delta, n, mf, cell * ratio, (cell + 1) * ratio)?;
        let j = argmax(&values);
        let idx = cell * ratio + j;
        if values[j] > best.0 || (values[j] == best.0 && idx < best.1) {
            best = (values[j], idx);
        }
    }
    Ok(IDeltaResult::new(best.0, grid_point(mf, best.1), 1.0 / mf as f64))
}

/// `ln I_Δ(n)` at a fixed `r` together with its gradient in θ; with `r` the
/// maximizer this is the envelope gradient of the supremum,
/// `Σ_k softmax_k · n · ∂_θ Δ(k/n, r)`.
pub fn i_delta_log_and_grad(params: &ConvexDeltaParams, n: usize, r: f64) -> (f64, Vec<f64>) {
    let nf = n as f64;
    let present: Vec<usize> = (0..=n).filter(|&k| term_is_present(n, k, r)).collect();
    let terms: Vec<f64> =
        present.iter().map(|&k| ln_binomial_pmf(n, k, r) + nf * params.eval(k as f64 / nf, r)).collect();
    let log_value = log_sum_exp(&terms);
    let mut grad = vec![0.0; params.len()];
    for (&k, &t) in present.iter().zip(&terms) {
        let weight = (t - log_value).exp();
        if weight > 0.0 {
            params.accumulate_grad_params(k as f64 / nf, r, nf * weight, &mut grad);
        }
    }
    (log_value, grad)
}

/// Gradient of `ln I_Δ(n)` in θ with `r` held at `argmax_r`.
pub fn i_delta_grad_params(params: &ConvexDeltaParams, n: usize, argmax_r: f64) -> Vec<f64> {
    i_delta_log_and_grad(params, n, argmax_r).1
}

/// `I_kl(n) = Σ_k C(n,k) (k/n)^k (1-k/n)^(n-k)`, the `r`-independent value of
/// the kl moment term.
pub fn i_kl_exact(n: usize) -> f64 {
    assert!(n >= 1, "n must be positive");
    let terms: Vec<f64> = (0..=n).map(|k| ln_binomial_pmf(n, k, k as f64 / n as f64)).collect();
    log_sum_exp(&terms).exp()
}
