//! Scalar bound primitives: the Bernoulli KL and its upper inverse, the
//! Catoni family, the binomial-tail and Chernoff test-set bounds, the
//! PAC-Bayes-kl bounds and the Occam bounds.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};
use crate::i_delta::i_kl_exact;
use crate::numeric::{bisect_last_true, ln_binomial_pmf, log_sum_exp};

/// Absolute tolerance of every bisection in this module.
pub const BISECTION_TOL: f64 = 1e-10;

/// A probability-like quantity in `[0, 1]`: a risk, an empirical risk or a
/// bound value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Risk(f64);

impl Risk {
    pub const ZERO: Risk = Risk(0.0);
    pub const ONE: Risk = Risk(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Risk(value))
        } else {
            Err(Error::NotARisk { what: "risk", value })
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 1 (the vacuous bound).
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Risk(1.0)
        } else {
            Risk(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Risk> for f64 {
    fn from(r: Risk) -> f64 {
        r.0
    }
}

/// `KL(Q||P)`, the risk-set size `n` and the failure probability `delta`,
/// together with the derived budget `alpha = (KL + ln(1/delta)) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundBudget {
    kl_divergence: f64,
    n: usize,
    delta: f64,
    alpha: f64,
}

impl BoundBudget {
    pub fn new(kl_divergence: f64, n: usize, delta: f64) -> Result<Self> {
        if !(kl_divergence >= 0.0 && kl_divergence.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "KL divergence must be finite and nonnegative, got {kl_divergence}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        check_delta(delta)?;
        let alpha = (kl_divergence - delta.ln()) / n as f64;
        Ok(BoundBudget { kl_divergence, n, delta, alpha })
    }

    pub fn kl_divergence(&self) -> f64 {
        self.kl_divergence
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {delta}")))
    }
}

/// Bernoulli KL on raw floats: `0 ln 0 = 0`, `+inf` where a log argument
/// vanishes, and `+inf` outside `[0, 1]^2`.
pub fn kl_value(q: f64, p: f64) -> f64 {
    if !(0.0..=1.0).contains(&q) || !(0.0..=1.0).contains(&p) {
        return f64::INFINITY;
    }
    let head = if q == 0.0 {
        0.0
    } else if p == 0.0 {
        return f64::INFINITY;
    } else {
        q * (q / p).ln()
    };
    let tail = if q == 1.0 {
        0.0
    } else if p == 1.0 {
        return f64::INFINITY;
    } else {
        (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
    };
    // rounding can push kl(q, q±ε) a hair below zero
    (head + tail).max(0.0)
}

/// `kl(q, p) = q ln(q/p) + (1-q) ln((1-q)/(1-p))`.
pub fn kl_bernoulli(q: Risk, p: Risk) -> f64 {
    kl_value(q.0, p.0)
}

/// `sup { p in [q, 1] : kl(q, p) <= c }`, by bisection on the increasing branch.
pub fn kl_inverse_upper(q: Risk, c: f64) -> Risk {
    let q = q.0;
    if c.is_nan() || c <= 0.0 {
        return Risk(q);
    }
    if kl_value(q, 1.0) <= c {
        return Risk::ONE;
    }
    Risk(bisect_last_true(q, 1.0, BISECTION_TOL, |p| kl_value(q, p) <= c))
}

/// `C_beta(q, p) = -ln(1 + p (e^{-beta} - 1)) - beta q`.
pub fn catoni_value(q: f64, p: f64, beta: f64) -> f64 {
    let inner = p * (-beta).exp_m1();
    if inner <= -1.0 {
        return f64::INFINITY;
    }
    -inner.ln_1p() - beta * q
}

/// Closed-form Catoni bound `(1 - exp(-beta q - alpha)) / (1 - e^{-beta})`
/// without the clip at 1.
pub fn catoni_inverse_extended(q: f64, alpha: f64, beta: f64) -> f64 {
    (-beta * q - alpha).exp_m1() / (-beta).exp_m1()
}

/// The Catoni bound at a fixed `beta`, clipped at 1.
pub fn catoni_inverse(q: Risk, budget: &BoundBudget, beta: f64) -> Risk {
    Risk::clamped(catoni_inverse_extended(q.0, budget.alpha, beta))
}

/// The unique `beta > 0` with `C_beta(q, p) = kl(q, p)`, for `0 < q < p < 1`.
pub fn catoni_beta_star(q: Risk, p: Risk) -> Result<f64> {
    let (q, p) = (q.0, p.0);
    if q == 0.0 {
        return Err(Error::InvalidArgument(
            "beta* is infinite at q = 0; use the beta -> infinity limit 1 - e^{-alpha}".into(),
        ));
    }
    if !(q < p && p < 1.0) {
        return Err(Error::InvalidArgument(format!("beta* needs 0 < q < p < 1, got q={q}, p={p}")));
    }
    Ok(((1.0 - q) / (1.0 - p)).ln() + (p / q).ln())
}

/// `ln P[Bin(m, p) <= k]`, summed in log space.
pub fn binomial_cdf_ln(k: usize, m: usize, p: f64) -> f64 {
    if k >= m {
        return 0.0;
    }
    let terms: Vec<f64> = (0..=k).map(|i| ln_binomial_pmf(m, i, p)).collect();
    log_sum_exp(&terms).min(0.0)
}

/// Binomial tail test-set bound `sup { p : delta <= P[Bin(m, p) <= k] }`.
pub fn binomial_tail_inverse(m: usize, k: usize, delta: f64) -> Result<Risk> {
    if m == 0 || k > m {
        return Err(Error::InvalidArgument(format!("need 0 <= k <= m, m > 0; got m={m}, k={k}")));
    }
    check_delta(delta)?;
    if k == m {
        return Ok(Risk::ONE);
    }
    let ln_delta = delta.ln();
    Ok(Risk(bisect_last_true(0.0, 1.0, BISECTION_TOL, |p| binomial_cdf_ln(k, m, p) >= ln_delta)))
}

/// Chernoff test-set bound `kl^{-1}(q_test, ln(1/delta) / m)`.
pub fn chernoff_test_bound(q_test: Risk, m: usize, delta: f64) -> Result<Risk> {
    if m == 0 {
        return Err(Error::InvalidArgument("test set must be nonempty".into()));
    }
    check_delta(delta)?;
    Ok(kl_inverse_upper(q_test, -delta.ln() / m as f64))
}

/// How the moment term `I_kl(N)` of the PAC-Bayes-kl bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IMode {
    /// Maurer's upper bound `2 sqrt(N)`.
    Maurer2SqrtN,
    /// The exact sum, see [`i_kl_exact`].
    Exact,
}

impl IMode {
    pub fn value(self, n: usize) -> f64 {
        match self {
            IMode::Maurer2SqrtN => 2.0 * (n as f64).sqrt(),
            IMode::Exact => i_kl_exact(n),
        }
    }
}

/// PAC-Bayes-kl bound `kl^{-1}(q, (KL + ln(I/delta)) / N)`.
pub fn pac_bayes_kl_bound(q: Risk, budget: &BoundBudget, mode: IMode) -> Risk {
    let n = budget.n as f64;
    kl_inverse_upper(q, budget.alpha + mode.value(budget.n).ln() / n)
}

/// The PAC-Bayes-kl expression without its `ln(I)/N` term. Not a proven
/// bound; a lower bound on every expected bound of the generic theorem.
pub fn conjectured_kl_bound(q: Risk, budget: &BoundBudget) -> Risk {
    kl_inverse_upper(q, budget.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccamKind {
    Binomial,
    Chernoff,
}

/// Occam bound for a hypothesis carrying prior mass `prior_mass`.
pub fn occam_bound(kind: OccamKind, q: Risk, n: usize, prior_mass: f64, delta: f64) -> Result<Risk> {
    if !(prior_mass > 0.0 && prior_mass <= 1.0) {
        return Err(Error::InvalidArgument(format!("prior mass must lie in (0, 1], got {prior_mass}")));
    }
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    match kind {
        OccamKind::Binomial => {
            let count = q.0 * n as f64;
            let k = count.round();
            if (count - k).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "binomial Occam bound needs an integer error count, got n*q = {count}"
                )));
            }
            binomial_tail_inverse(n, k as usize, prior_mass * delta)
        }
        OccamKind::Chernoff => Ok(kl_inverse_upper(q, (-prior_mass.ln() - delta.ln()) / n as f64)),
    }
}
