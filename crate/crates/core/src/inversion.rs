//! Partial inversion `B[Δ(q, ·), c] = sup { p : Δ(q, p) <= c }` of a
//! comparator that is convex in `p`, its extension beyond `p = 1`, and the
//! implicit derivative of the crossing point.

use crate::comparator::Comparator;
use crate::convex_delta::ConvexDeltaParams;
use crate::error::{Error, Result};
use crate::numeric::{bisect_last_true, golden_section_min, uniform_grid};
use crate::scalar_bounds::{Risk, BISECTION_TOL};

/// Spacing of the upcrossing scan.
pub const SCAN_SPACING: f64 = 1e-4;
/// Largest scan ceiling of the extended inversion.
pub const EXTENDED_CAP: f64 = 8.0;
/// Slopes at or below this make the implicit derivative meaningless.
pub const FLAT_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// The sublevel set ends inside the domain; `value` is the upcrossing.
    Found,
    /// The level is never exceeded; `value` is the domain end.
    WholeDomain,
    /// The level is exceeded everywhere; `value` is 1 (`sup ∅ = 1`).
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub crossing: Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Grid scan followed by bisection between the bracketing grid points.
    Refined,
    /// The last grid point of the sublevel set, without refinement.
    GridOnly,
}

/// Scans `f` on `[0, upper]` at `spacing` for the last point with `f <= c`.
pub fn invert_scan<F: Fn(f64) -> f64>(f: F, c: f64, upper: f64, spacing: f64, mode: ScanMode) -> Inversion {
    let grid = uniform_grid(0.0, upper, spacing);
    let inside: Vec<bool> = grid.iter().map(|&p| f(p) <= c).collect();
    let Some(last) = inside.iter().rposition(|&b| b) else {
        return Inversion { value: 1.0, crossing: Crossing::Empty };
    };
    if last == grid.len() - 1 {
        return Inversion { value: upper, crossing: Crossing::WholeDomain };
    }
    debug_assert!(
        inside.windows(2).filter(|w| w[0] && !w[1]).count() <= 1,
        "more than one upcrossing; comparator is not convex in p"
    );
    let value = match mode {
        ScanMode::GridOnly => grid[last],
        ScanMode::Refined => bisect_last_true(grid[last], grid[last + 1], BISECTION_TOL, |p| f(p) <= c),
    };
    Inversion { value, crossing: Crossing::Found }
}

/// The same inversion for `f` known to be convex, without a scan: a
/// golden-section search locates the minimum and a bisection the
/// upcrossing to its right. About a hundred evaluations of `f`.
pub fn invert_convex<F: Fn(f64) -> f64>(f: F, c: f64, upper: f64) -> Inversion {
    if f(upper) <= c {
        return Inversion { value: upper, crossing: Crossing::WholeDomain };
    }
    let start = if f(0.0) <= c {
        0.0
    } else {
        let (p_min, f_min) = golden_section_min(0.0, upper, 1e-10, &f);
        if f_min > c {
            return Inversion { value: 1.0, crossing: Crossing::Empty };
        }
        p_min
    };
    let value = bisect_last_true(start, upper, BISECTION_TOL, |p| f(p) <= c);
    Inversion { value, crossing: Crossing::Found }
}

/// `sup { p in [0, 1] : Δ(q, p) <= c }` with `sup ∅ = 1`.
pub fn invert_bound<C: Comparator + ?Sized>(delta: &C, q: f64, c: f64) -> Risk {
    invert_bound_with(delta, q, c, ScanMode::Refined)
}

pub fn invert_bound_with<C: Comparator + ?Sized>(delta: &C, q: f64, c: f64, mode: ScanMode) -> Risk {
    Risk::clamped(invert_scan(|p| delta.eval(q, p), c, 1.0, SCAN_SPACING, mode).value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedInversion {
    pub value: f64,
    /// No upcrossing was found up to the cap, or the sublevel set is empty;
    /// the derivative is taken to be zero.
    pub failed: bool,
}

fn extend<I: FnMut(f64) -> Inversion>(mut invert: I, u0: f64, cap: f64) -> ExtendedInversion {
    assert!(u0 > 0.0, "initial ceiling must be positive");
    let mut u = u0.min(cap);
    loop {
        let inv = invert(u);
        match inv.crossing {
            Crossing::Found => return ExtendedInversion { value: inv.value, failed: false },
            Crossing::Empty => return ExtendedInversion { value: inv.value, failed: true },
            Crossing::WholeDomain if u >= cap => return ExtendedInversion { value: u, failed: true },
            Crossing::WholeDomain => u = (2.0 * u).min(cap),
        }
    }
}

/// `sup { p >= 0 : Δ(q, p) <= c }`, scanning `[0, u]` and doubling `u` from
/// `u0` up to [`EXTENDED_CAP`].
pub fn invert_bound_extended<C: Comparator + ?Sized>(delta: &C, q: f64, c: f64, u0: f64) -> ExtendedInversion {
    extend(|u| invert_scan(|p| delta.eval(q, p), c, u, SCAN_SPACING, ScanMode::Refined), u0, EXTENDED_CAP)
}

/// [`invert_bound_extended`] through [`invert_convex`].
pub fn invert_convex_extended<F: Fn(f64) -> f64>(f: F, c: f64, u0: f64) -> ExtendedInversion {
    extend(|u| invert_convex(&f, c, u), u0, EXTENDED_CAP)
}

/// Gradient of the crossing point `x(θ)` defined by `Δ_θ(q, x) = c(θ)`:
/// `(∂_θ c − ∂_θ Δ_θ(q, x)) / ∂_p Δ_θ(q, x)`.
pub fn invert_derivative(params: &ConvexDeltaParams, q: f64, dc_dparams: &[f64], x: f64) -> Result<Vec<f64>> {
    let mut grad = dc_dparams.to_vec();
    accumulate_invert_derivative(params, q, x, 1.0, &mut grad)?;
    Ok(grad)
}

/// In-place form: rewrites `grad`, holding `∂_θ c` on entry, into
/// `weight · dx/dθ`.
pub fn accumulate_invert_derivative(
    params: &ConvexDeltaParams,
    q: f64,
    x: f64,
    weight: f64,
    grad: &mut [f64],
) -> Result<()> {
    let slope = params.grad_p(q, x);
    if !(slope > FLAT_SLOPE) {
        return Err(Error::FlatCrossing { x, slope });
    }
    let scale = weight / slope;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    params.accumulate_grad_params(q, x, -scale, grad);
    Ok(())
}
