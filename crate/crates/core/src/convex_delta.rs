//! The convex comparator family `Δ_θ(q, p) = a0 + a_q q + a_p p + Σ_h v_h s(w_h·(q, p) + b_h)`
//! with `s` the softplus and `v_h = s(raw_h) > 0`.
//!
//! Parameters live in one flat vector laid out as
//! `[a0, a_q, a_p, w_q[0..H], w_p[0..H], b[0..H], raw[0..H]]`, which is also the
//! layout of every gradient returned here.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::comparator::Comparator;
use crate::error::{Error, Result};
use crate::numeric::{golden_section_min, softplus};

const FORMAT_TAG: &str = "pblab-convex-delta";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDeltaParams {
    hidden: usize,
    theta: Vec<f64>,
    // softplus(raw), kept in sync with `theta`
    out: Vec<f64>,
}

impl ConvexDeltaParams {
    /// Number of parameters for hidden width `hidden`.
    pub fn flat_len(hidden: usize) -> usize {
        3 + 4 * hidden
    }

    pub fn affine(a0: f64, a_q: f64, a_p: f64) -> Self {
        Self::from_flat(0, vec![a0, a_q, a_p]).expect("length matches")
    }

    pub fn from_flat(hidden: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != Self::flat_len(hidden) {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters for hidden width {hidden}, got {}",
                Self::flat_len(hidden),
                theta.len()
            )));
        }
        let mut params = ConvexDeltaParams { hidden, theta, out: vec![0.0; hidden] };
        params.refresh();
        Ok(params)
    }

    /// Hidden weights and biases drawn from `N(0, 1/2)`, output weights at
    /// `s(-2)`, affine part `p - q`.
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
        let mut theta = Vec::with_capacity(Self::flat_len(hidden));
        theta.extend_from_slice(&[0.0, -1.0, 1.0]);
        for _ in 0..3 * hidden {
            theta.push(normal.sample(rng));
        }
        theta.extend(std::iter::repeat_n(-2.0, hidden));
        Self::from_flat(hidden, theta).expect("length matches")
    }

    fn refresh(&mut self) {
        let h = self.hidden;
        for (o, &raw) in self.out.iter_mut().zip(&self.theta[3 + 3 * h..]) {
            *o = softplus(raw);
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn set_flat(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.theta.len(), "parameter length mismatch");
        self.theta.copy_from_slice(theta);
        self.refresh();
    }

    /// Applies `f` to the flat parameter vector, then resynchronizes.
    pub fn update<F: FnOnce(&mut [f64])>(&mut self, f: F) {
        f(&mut self.theta);
        self.refresh();
    }

    /// `(a0, a_q, a_p)`.
    pub fn affine_part(&self) -> (f64, f64, f64) {
        (self.theta[0], self.theta[1], self.theta[2])
    }

    /// Effective output weights `v_h = s(raw_h)`.
    pub fn output_weights(&self) -> &[f64] {
        &self.out
    }

    fn layers(&self) -> (&[f64], &[f64], &[f64]) {
        let h = self.hidden;
        (&self.theta[3..3 + h], &self.theta[3 + h..3 + 2 * h], &self.theta[3 + 2 * h..3 + 3 * h])
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let (wq, wp, b) = self.layers();
        let mut acc = self.theta[0] + self.theta[1] * q + self.theta[2] * p;
        for h in 0..self.hidden {
            acc += self.out[h] * softplus(wq[h] * q + wp[h] * p + b[h]);
        }
        acc
    }

    /// `(Δ(q, p), ∂Δ/∂p)` in one pass.
    pub fn eval_with_grad_p(&self, q: f64, p: f64) -> (f64, f64) {
        let (wq, wp, b) = self.layers();
        let mut value = self.theta[0] + self.theta[1] * q + self.theta[2] * p;
        let mut slope = self.theta[2];
        for h in 0..self.hidden {
            let s = softplus(wq[h] * q + wp[h] * p + b[h]);
            value += self.out[h] * s;
            // s'(z) = sigmoid(z) = 1 - e^{-s(z)}
            slope += self.out[h] * wp[h] * -(-s).exp_m1();
        }
        (value, slope)
    }

    pub fn grad_p(&self, q: f64, p: f64) -> f64 {
        self.eval_with_grad_p(q, p).1
    }

    pub fn grad_q(&self, q: f64, p: f64) -> f64 {
        let (wq, wp, b) = self.layers();
        let mut slope = self.theta[1];
        for h in 0..self.hidden {
            let s = softplus(wq[h] * q + wp[h] * p + b[h]);
            slope += self.out[h] * wq[h] * -(-s).exp_m1();
        }
        slope
    }

    /// Adds `scale · ∂Δ(q, p)/∂θ` into `grad`.
    pub fn accumulate_grad_params(&self, q: f64, p: f64, scale: f64, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.theta.len(), "gradient length mismatch");
        let hd = self.hidden;
        let (wq, wp, b) = self.layers();
        grad[0] += scale;
        grad[1] += scale * q;
        grad[2] += scale * p;
        for h in 0..hd {
            let s = softplus(wq[h] * q + wp[h] * p + b[h]);
            let g = scale * self.out[h] * -(-s).exp_m1();
            grad[3 + h] += g * q;
            grad[3 + hd + h] += g * p;
            grad[3 + 2 * hd + h] += g;
            // dv/draw = sigmoid(raw) = 1 - e^{-v}
            let dv = -(-self.out[h]).exp_m1();
            grad[3 + 3 * hd + h] += scale * dv * s;
        }
    }

    pub fn grad_params(&self, q: f64, p: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.theta.len()];
        self.accumulate_grad_params(q, p, 1.0, &mut g);
        g
    }

    /// Line-oriented text: a tag line, the hidden width, then one parameter
    /// per line in flat order. Values use Rust's shortest round-trip
    /// formatting, so parsing the output reproduces every bit.
    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT_TAG} {FORMAT_VERSION}\nhidden {}\n", self.hidden);
        for v in &self.theta {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };

        let (i, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(FORMAT_TAG) {
            return Err(parse_err(i, "missing format tag"));
        }
        match head.next().map(str::parse::<u32>) {
            Some(Ok(FORMAT_VERSION)) => {}
            _ => return Err(parse_err(i, "unsupported format version")),
        }

        let (i, hidden_line) = lines.next().ok_or_else(|| parse_err(i + 1, "missing hidden width"))?;
        let hidden = hidden_line
            .strip_prefix("hidden")
            .and_then(|rest| rest.trim().parse::<usize>().ok())
            .ok_or_else(|| parse_err(i, "expected `hidden <width>`"))?;

        let mut theta = Vec::with_capacity(Self::flat_len(hidden));
        for (i, line) in lines {
            let v: f64 = line.trim().parse().map_err(|_| parse_err(i, "not a number"))?;
            theta.push(v);
        }
        Self::from_flat(hidden, theta)
    }
}

impl Comparator for ConvexDeltaParams {
    fn eval(&self, q: f64, p: f64) -> f64 {
        ConvexDeltaParams::eval(self, q, p)
    }
}

/// Samples of a one-dimensional function of `p` at a fixed `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub q: f64,
    pub p_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Piecewise-linear interpolation, constant beyond the grid ends.
    pub fn eval(&self, p: f64) -> f64 {
        let g = &self.p_grid;
        if p <= g[0] {
            return self.values[0];
        }
        let last = g.len() - 1;
        if p >= g[last] {
            return self.values[last];
        }
        let i = g.partition_point(|&x| x <= p) - 1;
        let t = (p - g[i]) / (g[i + 1] - g[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// `Δ'(q, p) = inf_{p' >= p} Δ(q, p')` sampled on `p_grid`, as a running
/// minimum from the right.
pub fn monotone_rectify<C: Comparator + ?Sized>(delta: &C, q: f64, p_grid: &[f64]) -> GridFunction {
    assert!(p_grid.len() >= 2, "grid needs at least two points");
    assert!(p_grid.windows(2).all(|w| w[0] < w[1]), "grid must be strictly increasing");
    let mut values: Vec<f64> = p_grid.iter().map(|&p| delta.eval(q, p)).collect();
    for i in (0..values.len() - 1).rev() {
        values[i] = values[i].min(values[i + 1]);
    }
    GridFunction { q, p_grid: p_grid.to_vec(), values }
}

/// The rectification of a comparator that is convex in `p`, evaluated
/// pointwise: `Δ'(q, p) = Δ(q, max(p, m_q))` with `m_q` the minimizer of
/// `Δ(q, ·)` on `[0, 1]`.
pub struct Rectified<'a, C: ?Sized> {
    inner: &'a C,
    cache: Vec<(f64, f64)>,
}

impl<'a, C: Comparator + ?Sized> Rectified<'a, C> {
    /// Precomputes the minimizers for the empirical risks in `qs`; other `q`
    /// values are handled on the fly.
    pub fn new(inner: &'a C, qs: &[f64]) -> Self {
        let cache = qs.iter().map(|&q| (q, Self::minimizer(inner, q))).collect();
        Rectified { inner, cache }
    }

    fn minimizer(inner: &C, q: f64) -> f64 {
        golden_section_min(0.0, 1.0, 1e-10, |p| inner.eval(q, p)).0
    }
}

impl<C: Comparator + ?Sized> Comparator for Rectified<'_, C> {
    fn eval(&self, q: f64, p: f64) -> f64 {
        if p > 1.0 {
            return self.inner.eval(q, p);
        }
        let m = match self.cache.iter().find(|(cq, _)| *cq == q) {
            Some(&(_, m)) => m,
            None => Self::minimizer(self.inner, q),
        };
        self.inner.eval(q, p.max(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64, hidden: usize) -> ConvexDeltaParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ConvexDeltaParams::init(hidden, &mut rng);
        // spread the output weights so every coordinate matters
        p.update(|t| {
            let h = hidden;
            for j in 0..h {
                t[3 + 3 * h + j] = rng.random_range(-2.0..1.0);
            }
            t[0] = rng.random_range(-1.0..1.0);
        });
        p
    }

    #[test]
    fn affine_identity() {
        let p = ConvexDeltaParams::affine(0.0, 0.0, 1.0);
        assert_eq!(p.eval(0.3, 0.7), 0.7);
        assert_eq!(p.grad_p(0.3, 0.7), 1.0);
        let g = p.grad_params(0.3, 0.7);
        assert_eq!(g, vec![1.0, 0.3, 0.7]);
    }

    #[test]
    fn init_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ConvexDeltaParams::init(8, &mut rng);
        assert_eq!(p.len(), 35);
        assert_eq!(p.affine_part(), (0.0, -1.0, 1.0));
        assert!(p.output_weights().iter().all(|&v| v > 0.0 && (v - softplus(-2.0)).abs() < 1e-15));
    }

    #[test]
    fn midpoint_convexity() {
        for seed in 0..10 {
            let d = random_params(seed, 16);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..1000 {
                let (q1, p1, q2, p2): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
                let mid = d.eval(0.5 * (q1 + q2), 0.5 * (p1 + p2));
                assert!(mid <= 0.5 * d.eval(q1, p1) + 0.5 * d.eval(q2, p2) + 1e-9);
            }
        }
    }

    #[test]
    fn second_differences_nonnegative_on_grid() {
        let d = random_params(3, 32);
        let h = 0.01;
        for i in 1..100 {
            for j in 1..100 {
                let (q, p) = (i as f64 / 100.0, j as f64 / 100.0);
                let c = 2.0 * d.eval(q, p);
                assert!(d.eval(q + h, p) + d.eval(q - h, p) - c >= -1e-9);
                assert!(d.eval(q, p + h) + d.eval(q, p - h) - c >= -1e-9);
                assert!(d.eval(q + h, p + h) + d.eval(q - h, p - h) - c >= -1e-9);
                assert!(d.eval(q + h, p - h) + d.eval(q - h, p + h) - c >= -1e-9);
            }
        }
    }

    #[test]
    fn grad_p_and_q_match_central_differences() {
        let d = random_params(7, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        for _ in 0..100 {
            let (q, p): (f64, f64) = (rng.random(), rng.random());
            let fd_p = (d.eval(q, p + h) - d.eval(q, p - h)) / (2.0 * h);
            let fd_q = (d.eval(q + h, p) - d.eval(q - h, p)) / (2.0 * h);
            assert_abs_diff_eq!(d.grad_p(q, p), fd_p, epsilon = 1e-6 * (1.0 + fd_p.abs()));
            assert_abs_diff_eq!(d.grad_q(q, p), fd_q, epsilon = 1e-6 * (1.0 + fd_q.abs()));
            assert_eq!(d.eval_with_grad_p(q, p).0, d.eval(q, p));
        }
    }

    #[test]
    fn grad_params_match_central_differences() {
        let d = random_params(11, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        for _ in 0..20 {
            let (q, p): (f64, f64) = (rng.random(), rng.random());
            let g = d.grad_params(q, p);
            assert_eq!(g[0], 1.0);
            assert_eq!(g[2], p);
            for j in 0..d.len() {
                let mut plus = d.clone();
                plus.update(|t| t[j] += h);
                let mut minus = d.clone();
                minus.update(|t| t[j] -= h);
                let fd = (plus.eval(q, p) - minus.eval(q, p)) / (2.0 * h);
                assert_abs_diff_eq!(g[j], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let d = random_params(5, 9);
        let back = ConvexDeltaParams::from_text(&d.to_text()).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.as_flat().iter().zip(d.as_flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        assert!(matches!(ConvexDeltaParams::from_text(""), Err(Error::Parse { .. })));
        let bad = "pblab-convex-delta 1\nhidden 0\n0.0\nx\n1.0\n";
        assert_eq!(ConvexDeltaParams::from_text(bad), Err(Error::Parse { line: 4, msg: "not a number".into() }));
        assert!(ConvexDeltaParams::from_text("pblab-convex-delta 9\nhidden 0\n").is_err());
        let short = "pblab-convex-delta 1\nhidden 1\n0\n0\n0\n";
        assert!(matches!(ConvexDeltaParams::from_text(short), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rectify_parabola() {
        let grid = crate::numeric::uniform_grid(0.0, 1.0, 1e-3);
        let f = |_q: f64, p: f64| (p - 0.5) * (p - 0.5);
        let r = monotone_rectify(&f, 0.2, &grid);
        for (&p, &v) in r.p_grid.iter().zip(&r.values) {
            let expect = if p <= 0.5 { 0.0 } else { (p - 0.5) * (p - 0.5) };
            assert_abs_diff_eq!(v, expect, epsilon = 1e-15);
        }
        assert!(r.is_nondecreasing());
        let rect = Rectified::new(&f, &[]);
        assert_abs_diff_eq!(rect.eval(0.2, 0.1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rect.eval(0.2, 0.8), 0.09, epsilon = 1e-15);
    }

    #[test]
    fn rectify_keeps_nondecreasing_functions() {
        let grid = crate::numeric::uniform_grid(0.3, 1.0, 1e-3);
        let kl = crate::comparator::KlComparator;
        let r = monotone_rectify(&kl, 0.3, &grid);
        for (&p, &v) in r.p_grid.iter().zip(&r.values) {
            assert_eq!(v, kl.eval(0.3, p));
        }
    }

    #[test]
    fn rectify_random_params_against_brute_force() {
        let grid = crate::numeric::uniform_grid(0.0, 1.0, 1e-2);
        for seed in 0..5 {
            let d = random_params(seed, 10);
            let r = monotone_rectify(&d, 0.4, &grid);
            assert!(r.is_nondecreasing());
            for (i, &v) in r.values.iter().enumerate() {
                let brute = grid[i..].iter().map(|&p| d.eval(0.4, p)).fold(f64::INFINITY, f64::min);
                assert_eq!(v, brute);
                assert!(v <= d.eval(0.4, grid[i]));
            }
        }
    }

    #[test]
    fn grid_function_interpolates() {
        let g = GridFunction { q: 0.0, p_grid: vec![0.0, 0.5, 1.0], values: vec![0.0, 1.0, 3.0] };
        assert_eq!(g.eval(0.25), 0.5);
        assert_eq!(g.eval(0.75), 2.0);
        assert_eq!(g.eval(-1.0), 0.0);
        assert_eq!(g.eval(2.0), 3.0);
    }
}
