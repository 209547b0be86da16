//! Gaussian distributions over the weights of a linear classifier on a
//! Gaussian-basis feature map: closed-form Gibbs risk, Gaussian KL,
//! prior fitting, bound-driven posterior optimization and the
//! deterministic test-set classifier.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::adam::Adam;
use crate::convex_delta::ConvexDeltaParams;
use crate::error::{Error, Result};
use crate::inversion::{invert_bound, invert_convex_extended};
use crate::numeric::{normal_cdf, normal_pdf};
use crate::scalar_bounds::{
    binomial_tail_inverse, catoni_inverse, chernoff_test_bound, conjectured_kl_bound, kl_inverse_upper,
    pac_bayes_kl_bound, BoundBudget, IMode, Risk,
};
use crate::synthetic_tasks::{split_dataset, Point, SplitMode, Task};

/// Smallest admissible diagonal entry of a Cholesky factor.
pub const MIN_CHOL_DIAG: f64 = 1e-8;
/// Floor on the per-point score variance `φᵀΣφ`.
pub const MIN_SCORE_VARIANCE: f64 = 1e-12;

/// Gaussian bumps `φ_k(x) = exp(-(x - x_k)² / (2ℓ²))` at evenly spaced centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    centers: Vec<f64>,
    lengthscale: f64,
}

impl FeatureMap {
    pub fn new(count: usize, low: f64, high: f64, lengthscale: f64) -> Result<Self> {
        if count < 2 || !(low < high) || !(lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature map needs count >= 2, low < high and a positive lengthscale; got {count}, [{low}, {high}], {lengthscale}"
            )));
        }
        let step = (high - low) / (count - 1) as f64;
        let centers = (0..count).map(|i| if i + 1 == count { high } else { low + step * i as f64 }).collect();
        Ok(FeatureMap { centers, lengthscale })
    }

    /// 64 centres on `[-2, 2]`, sixteen per unit of input.
    pub fn standard(lengthscale: f64) -> Result<Self> {
        Self::new(64, -2.0, 2.0, lengthscale)
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn features(&self, x: f64) -> DVector<f64> {
        let inv = 1.0 / (2.0 * self.lengthscale * self.lengthscale);
        DVector::from_iterator(self.dim(), self.centers.iter().map(|c| (-(x - c) * (x - c) * inv).exp()))
    }

    /// Feature rows of `points` as an `n × K` matrix, plus the labels.
    pub fn design(&self, points: &[Point]) -> Design {
        let inv = 1.0 / (2.0 * self.lengthscale * self.lengthscale);
        let phi = DMatrix::from_fn(points.len(), self.dim(), |i, k| {
            let d = points[i].x - self.centers[k];
            (-d * d * inv).exp()
        });
        Design { phi, y: points.iter().map(|p| p.y).collect() }
    }
}

/// Precomputed features of a point set.
#[derive(Debug, Clone)]
pub struct Design {
    pub phi: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Design {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `N(mean, chol · cholᵀ)` with `chol` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if chol.nrows() != k || chol.ncols() != k {
            return Err(Error::InvalidArgument(format!("factor must be {k}x{k}")));
        }
        for i in 0..k {
            if !(chol[(i, i)] >= MIN_CHOL_DIAG) {
                return Err(Error::InvalidArgument(format!(
                    "factor diagonal must be at least {MIN_CHOL_DIAG}, got {} at {i}",
                    chol[(i, i)]
                )));
            }
            for j in i + 1..k {
                if chol[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument("factor must be lower triangular".into()));
                }
            }
        }
        Ok(GaussianMeasure { mean, chol })
    }

    /// `N(0, σ² I)`.
    pub fn isotropic(dim: usize, sigma: f64) -> Self {
        Self::with_isotropic_covariance(DVector::zeros(dim), sigma)
    }

    /// `N(mean, σ² I)`.
    pub fn with_isotropic_covariance(mean: DVector<f64>, sigma: f64) -> Self {
        let chol = DMatrix::from_diagonal_element(mean.len(), mean.len(), sigma);
        GaussianMeasure { mean, chol }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// `ln det Σ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * z
    }
}

/// Gradient with respect to the mean and to the lower triangle of the factor.
type MeasureGrad = (DVector<f64>, DMatrix<f64>);

/// Gibbs risk of `N(mean, LLᵀ)` on a design and, on request, its gradients
/// with respect to the mean and to the lower triangle of `L`.
fn gibbs_risk_and_grad(
    mean: &DVector<f64>,
    chol: &DMatrix<f64>,
    design: &Design,
    want_grad: bool,
) -> (f64, Option<MeasureGrad>) {
    let n = design.len();
    let margins = &design.phi * mean;
    // row i of V is (Lᵀφ_i)ᵀ
    let v = &design.phi * chol;
    let mut risk = 0.0;
    let mut mean_coef = DVector::zeros(n);
    let mut chol_coef = DVector::zeros(n);
    for i in 0..n {
        let var = v.row(i).norm_squared();
        let floored = var < MIN_SCORE_VARIANCE;
        let sigma = var.max(MIN_SCORE_VARIANCE).sqrt();
        let y = design.y[i];
        let s = -y * margins[i] / sigma;
        risk += normal_cdf(s);
        if want_grad {
            let g = normal_pdf(s) / n as f64;
            mean_coef[i] = -g * y / sigma;
            if !floored {
                // ds/dσ = y m / σ² and dσ/dL = φ vᵀ / σ
                chol_coef[i] = g * y * margins[i] / (sigma * sigma * sigma);
            }
        }
    }
    risk /= n as f64;
    if !want_grad {
        return (risk, None);
    }
    let grad_mean = design.phi.tr_mul(&mean_coef);
    let mut scaled = v;
    for i in 0..n {
        scaled.row_mut(i).scale_mut(chol_coef[i]);
    }
    let mut grad_chol = design.phi.tr_mul(&scaled);
    grad_chol.fill_upper_triangle(0.0, 1);
    (risk, Some((grad_mean, grad_chol)))
}

/// Closed-form Gibbs risk `mean_i Φ(-y_i μᵀφ_i / ‖Lᵀφ_i‖)`.
pub fn gibbs_risk(q: &GaussianMeasure, points: &[Point], fmap: &FeatureMap) -> Result<Risk> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("Gibbs risk of an empty set".into()));
    }
    let (r, _) = gibbs_risk_and_grad(&q.mean, &q.chol, &fmap.design(points), false);
    Ok(Risk::clamped(r))
}

/// Gibbs risk with gradients `(∂/∂μ, ∂/∂L)` (lower triangle of `L`).
pub fn gibbs_risk_grad(q: &GaussianMeasure, points: &[Point], fmap: &FeatureMap) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (r, g) = gibbs_risk_and_grad(&q.mean, &q.chol, &fmap.design(points), true);
    let (gm, gl) = g.expect("gradient requested");
    (r, gm, gl)
}

/// Prior quantities reused across KL evaluations.
#[derive(Debug, Clone)]
struct PriorTerms {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl PriorTerms {
    fn new(p: &GaussianMeasure) -> Self {
        PriorTerms { mean: p.mean.clone(), chol: p.chol.clone(), log_det: p.log_det() }
    }

    /// `KL(N(mean, LLᵀ) ‖ P)` and optionally its gradients.
    fn kl_and_grad(&self, mean: &DVector<f64>, chol: &DMatrix<f64>, want_grad: bool) -> (f64, Option<MeasureGrad>) {
        let k = mean.len() as f64;
        let d = mean - &self.mean;
        let lp = &self.chol;
        let m = lp.solve_lower_triangular(chol).expect("prior factor has a positive diagonal");
        let z = lp.solve_lower_triangular(&d).expect("prior factor has a positive diagonal");
        let log_det_q = 2.0 * chol.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let kl = 0.5 * (m.norm_squared() + z.norm_squared() - k + self.log_det - log_det_q);
        if !want_grad {
            return (kl.max(0.0), None);
        }
        let lpt = lp.transpose();
        let grad_mean = lpt.solve_upper_triangular(&z).expect("positive diagonal");
        let mut grad_chol = lpt.solve_upper_triangular(&m).expect("positive diagonal");
        for i in 0..chol.nrows() {
            grad_chol[(i, i)] -= 1.0 / chol[(i, i)];
        }
        grad_chol.fill_upper_triangle(0.0, 1);
        (kl.max(0.0), Some((grad_mean, grad_chol)))
    }
}

/// `KL(Q ‖ P)` between Gaussians, via triangular solves.
pub fn kl_gaussians(q: &GaussianMeasure, p: &GaussianMeasure) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::InvalidArgument(format!("dimension mismatch: {} vs {}", q.dim(), p.dim())));
    }
    Ok(PriorTerms::new(p).kl_and_grad(&q.mean, &q.chol, false).0)
}

/// `KL(Q ‖ P)` with gradients `(∂/∂μ_Q, ∂/∂L_Q)`.
pub fn kl_gaussians_grad(q: &GaussianMeasure, p: &GaussianMeasure) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (kl, g) = PriorTerms::new(p).kl_and_grad(&q.mean, &q.chol, true);
    let (gm, gl) = g.expect("gradient requested");
    (kl, gm, gl)
}

/// Flat optimization coordinates of a Gaussian: the mean, then the lower
/// triangle of `L` row by row with the diagonal stored as `ln L_ii`.
#[derive(Debug, Clone, Copy)]
struct Coordinates {
    dim: usize,
}

impl Coordinates {
    fn len(&self) -> usize {
        self.dim + self.dim * (self.dim + 1) / 2
    }

    fn pack(&self, g: &GaussianMeasure) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.extend(g.mean.iter());
        for i in 0..self.dim {
            for j in 0..i {
                theta.push(g.chol[(i, j)]);
            }
            theta.push(g.chol[(i, i)].ln());
        }
        theta
    }

    fn unpack(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.dim;
        let mean = DVector::from_column_slice(&theta[..k]);
        let mut chol = DMatrix::zeros(k, k);
        let mut idx = k;
        for i in 0..k {
            for j in 0..i {
                chol[(i, j)] = theta[idx];
                idx += 1;
            }
            chol[(i, i)] = theta[idx].exp().max(MIN_CHOL_DIAG);
            idx += 1;
        }
        (mean, chol)
    }

    /// Chain rule from `(∂/∂μ, ∂/∂L)` to the flat coordinates.
    fn pack_grad(&self, gm: &DVector<f64>, gl: &DMatrix<f64>, chol: &DMatrix<f64>, out: &mut [f64]) {
        let k = self.dim;
        out[..k].copy_from_slice(gm.as_slice());
        let mut idx = k;
        for i in 0..k {
            for j in 0..i {
                out[idx] = gl[(i, j)];
                idx += 1;
            }
            out[idx] = gl[(i, i)] * chol[(i, i)];
            idx += 1;
        }
    }
}

/// Settings of the first-order fits of this module.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop when the best objective improved by less than `min_improvement`
    /// over the last `patience` steps.
    pub patience: usize,
    pub min_improvement: f64,
}

impl OptimConfig {
    pub fn posterior_default() -> Self {
        OptimConfig { learning_rate: 3e-4, max_steps: 3000, patience: 100, min_improvement: 1e-4 }
    }

    pub fn prior_default() -> Self {
        OptimConfig { learning_rate: 1e-2, max_steps: 1000, patience: 100, min_improvement: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub delta: f64,
    /// Scale of the data-free prior and covariance of every fitted prior.
    pub sigma0: f64,
    pub prior: OptimConfig,
    pub posterior: OptimConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: 0.1,
            sigma0: 1.0,
            prior: OptimConfig::prior_default(),
            posterior: OptimConfig::posterior_default(),
        }
    }
}

/// Outcome of [`minimize`].
struct FitResult {
    theta: Vec<f64>,
    objective: f64,
    steps: usize,
}

/// Adam with best-iterate tracking, the patience rule, and revert-and-halve
/// on non-finite steps (three reverts end the run).
fn minimize<F>(theta0: Vec<f64>, cfg: &OptimConfig, mut objective: F) -> FitResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut theta = theta0;
    let mut grad = vec![0.0; theta.len()];
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut best = FitResult { theta: theta.clone(), objective: f64::INFINITY, steps: 0 };
    let mut best_history = Vec::with_capacity(cfg.max_steps + 1);
    let mut reverts = 0;

    for step in 0..=cfg.max_steps {
        let value = objective(&theta, &mut grad);
        let finite = value.is_finite() && grad.iter().all(|g| g.is_finite());
        if !finite {
            reverts += 1;
            log::debug!("non-finite objective at step {step}; revert {reverts}");
            if reverts >= 3 {
                break;
            }
            theta.clone_from(&best.theta);
            adam.learning_rate *= 0.5;
            best_history.push(best.objective);
            continue;
        }
        if value < best.objective {
            best.objective = value;
            best.theta.clone_from(&theta);
        }
        best.steps = step;
        best_history.push(best.objective);
        if step >= cfg.patience && best_history[step - cfg.patience] - best.objective < cfg.min_improvement {
            break;
        }
        if step < cfg.max_steps {
            adam.step(&mut theta, &grad);
        }
    }
    best
}

/// The bound minimized by [`optimize_posterior_bound`].
#[derive(Debug, Clone, Copy)]
pub enum BoundKind<'a> {
    Catoni {
        beta: f64,
    },
    /// With the `2√N` moment factor.
    PacBayesKl,
    ConjecturedKl,
    LearnedConvex(&'a LearnedComparator),
}

/// A trained convex comparator with its moment term `ln I_Δ(n)` at the
/// risk-set size it will be used with.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedComparator {
    pub params: ConvexDeltaParams,
    pub n: usize,
    pub log_i: f64,
}

impl BoundKind<'_> {
    /// The bound as a risk value, clipped at 1.
    pub fn value(&self, q: Risk, budget: &BoundBudget) -> Risk {
        match self {
            BoundKind::Catoni { beta } => catoni_inverse(q, budget, *beta),
            BoundKind::PacBayesKl => pac_bayes_kl_bound(q, budget, IMode::Maurer2SqrtN),
            BoundKind::ConjecturedKl => conjectured_kl_bound(q, budget),
            BoundKind::LearnedConvex(l) => {
                invert_bound(&l.params, q.get(), budget.alpha() + l.log_i / budget.n() as f64)
            }
        }
    }

    /// Smooth surrogate objective and its partials in `q` and `KL`. Equals
    /// the bound wherever that is below 1 and stays informative beyond.
    fn objective(&self, q: f64, kl: f64, n: usize, delta: f64) -> (f64, f64, f64) {
        let nf = n as f64;
        let alpha = (kl - delta.ln()) / nf;
        match self {
            BoundKind::Catoni { beta } => {
                let e = (-beta * q - alpha).exp();
                let denom = -(-beta).exp_m1();
                ((-(-beta * q - alpha).exp_m1()) / denom, beta * e / denom, e / (nf * denom))
            }
            BoundKind::PacBayesKl => kl_objective(q, alpha + (2.0 * nf.sqrt()).ln() / nf, nf),
            BoundKind::ConjecturedKl => kl_objective(q, alpha, nf),
            BoundKind::LearnedConvex(l) => {
                let c = alpha + l.log_i / nf;
                let inv = invert_convex_extended(|p| l.params.eval(q, p), c, 1.0);
                if inv.failed {
                    return (inv.value, 0.0, 0.0);
                }
                let slope = l.params.grad_p(q, inv.value);
                if !(slope > crate::inversion::FLAT_SLOPE) {
                    return (inv.value, 0.0, 0.0);
                }
                (inv.value, -l.params.grad_q(q, inv.value) / slope, 1.0 / (nf * slope))
            }
        }
    }
}

/// `kl⁻¹(q, c)` with implicit partials; beyond `1 - 1e-9` the Pinsker
/// relaxation `q + √(c/2)` stands in so the gradient does not vanish.
fn kl_objective(q: f64, c: f64, nf: f64) -> (f64, f64, f64) {
    let q = q.clamp(1e-12, 1.0);
    let p = kl_inverse_upper(Risk::clamped(q), c).get();
    if p >= 1.0 - 1e-9 || p <= q {
        let root = (0.5 * c).sqrt();
        return ((q + root).max(p), 1.0, 1.0 / (4.0 * root * nf));
    }
    let dp = (p - q) / (p * (1.0 - p));
    let dq = (q * (1.0 - p) / (p * (1.0 - q))).ln();
    (p, -dq / dp, 1.0 / (dp * nf))
}

/// Result of a posterior fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    pub posterior: GaussianMeasure,
    /// The bound at the returned posterior, clipped at 1.
    pub bound: Risk,
    pub empirical_risk: Risk,
    pub kl: f64,
    pub steps: usize,
}

/// Starts at the prior and minimizes the chosen bound over the posterior
/// mean and factor, with `N = |risk_set|`.
pub fn optimize_posterior_bound(
    risk_set: &[Point],
    prior: &GaussianMeasure,
    kind: BoundKind<'_>,
    fmap: &FeatureMap,
    config: &LearnerConfig,
) -> Result<PosteriorFit> {
    if risk_set.is_empty() {
        return Err(Error::InvalidArgument("risk set must be nonempty".into()));
    }
    if let BoundKind::LearnedConvex(l) = kind {
        if l.n != risk_set.len() {
            return Err(Error::InvalidArgument(format!(
                "learned comparator was prepared for N = {}, risk set has {}",
                l.n,
                risk_set.len()
            )));
        }
    }
    let n = risk_set.len();
    BoundBudget::new(0.0, n, config.delta)?;
    let design = fmap.design(risk_set);
    let coords = Coordinates { dim: fmap.dim() };
    let terms = PriorTerms::new(prior);

    let fit = minimize(coords.pack(prior), &config.posterior, |theta, grad| {
        let (mean, chol) = coords.unpack(theta);
        let (q, gq) = gibbs_risk_and_grad(&mean, &chol, &design, true);
        let (kl, gk) = terms.kl_and_grad(&mean, &chol, true);
        let (value, d_q, d_kl) = kind.objective(q, kl, n, config.delta);
        let ((gqm, gql), (gkm, gkl)) = (gq.expect("requested"), gk.expect("requested"));
        coords.pack_grad(&(gqm * d_q + gkm * d_kl), &(gql * d_q + gkl * d_kl), &chol, grad);
        value
    });

    let (mean, chol) = coords.unpack(&fit.theta);
    let posterior = GaussianMeasure { mean, chol };
    let q = Risk::clamped(gibbs_risk_and_grad(&posterior.mean, &posterior.chol, &design, false).0);
    let kl = terms.kl_and_grad(&posterior.mean, &posterior.chol, false).0;
    let bound = kind.value(q, &BoundBudget::new(kl, n, config.delta)?);
    Ok(PosteriorFit { posterior, bound, empirical_risk: q, kl, steps: fit.steps })
}

/// The prior: `N(0, σ₀² I)` for an empty prior set, otherwise `N(μ, σ₀² I)`
/// with `μ` minimizing the Gibbs risk on the prior set.
pub fn fit_prior_ddp(prior_set: &[Point], fmap: &FeatureMap, config: &LearnerConfig) -> GaussianMeasure {
    let base = GaussianMeasure::isotropic(fmap.dim(), config.sigma0);
    if prior_set.is_empty() {
        return base;
    }
    let design = fmap.design(prior_set);
    let chol = base.chol.clone();
    let fit = minimize(vec![0.0; fmap.dim()], &config.prior, |theta, grad| {
        let mean = DVector::from_column_slice(theta);
        let (r, g) = gibbs_risk_and_grad(&mean, &chol, &design, true);
        grad.copy_from_slice(g.expect("requested").0.as_slice());
        r
    });
    GaussianMeasure::with_isotropic_covariance(DVector::from_vec(fit.theta), config.sigma0)
}

/// Minimizes the training Gibbs risk over mean and factor, starting from
/// [`fit_prior_ddp`] on the same set; an empty set gives the data-free prior.
pub fn erm_train(train_set: &[Point], fmap: &FeatureMap, config: &LearnerConfig) -> GaussianMeasure {
    let start = fit_prior_ddp(train_set, fmap, config);
    if train_set.is_empty() {
        return start;
    }
    let design = fmap.design(train_set);
    let coords = Coordinates { dim: fmap.dim() };
    let fit = minimize(coords.pack(&start), &config.posterior, |theta, grad| {
        let (mean, chol) = coords.unpack(theta);
        let (r, g) = gibbs_risk_and_grad(&mean, &chol, &design, true);
        let (gm, gl) = g.expect("requested");
        coords.pack_grad(&gm, &gl, &chol, grad);
        r
    });
    let (mean, chol) = coords.unpack(&fit.theta);
    GaussianMeasure { mean, chol }
}

/// Zero-one risk and error count of `x ↦ sign(μᵀφ(x))`, with `sign(0) = +1`.
pub fn bayes_classifier_risk(q: &GaussianMeasure, points: &[Point], fmap: &FeatureMap) -> Result<(Risk, usize)> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("classifier risk of an empty set".into()));
    }
    let design = fmap.design(points);
    let scores = &design.phi * &q.mean;
    let errors = scores
        .iter()
        .zip(&design.y)
        .filter(|(&s, &y)| {
            let pred = if s < 0.0 { -1.0 } else { 1.0 };
            pred != y
        })
        .count();
    Ok((Risk::clamped(errors as f64 / points.len() as f64), errors))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Catoni,
    PacBayesKl,
    ConjecturedKl,
    LearnedConvex,
    ChernoffTest,
    BinomialTest,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Catoni,
        Method::PacBayesKl,
        Method::ConjecturedKl,
        Method::LearnedConvex,
        Method::ChernoffTest,
        Method::BinomialTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Catoni => "catoni",
            Method::PacBayesKl => "pac_bayes_kl",
            Method::ConjecturedKl => "conjectured_kl",
            Method::LearnedConvex => "learned_convex",
            Method::ChernoffTest => "chernoff_test",
            Method::BinomialTest => "binomial_test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }

    pub fn is_pac_bayes(self) -> bool {
        !matches!(self, Method::ChernoffTest | Method::BinomialTest)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-task evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord {
    pub seed: u64,
    pub task_index: u64,
    pub method: Method,
    pub proportion: f64,
    pub n: usize,
    /// Size of the risk set or test set the bound is computed on.
    pub n_bound: usize,
    pub bound: f64,
    pub empirical_risk: f64,
    /// `KL(Q ‖ P)` for PAC-Bayes methods.
    pub kl: Option<f64>,
    pub heldout_risk: f64,
}

/// Hyperparameters a method needs beyond the learner configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct MethodContext<'a> {
    pub catoni_beta: Option<f64>,
    pub learned: Option<&'a LearnedComparator>,
}

/// Identifies a task in output records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskId {
    pub seed: u64,
    pub index: u64,
}

/// Splits the dataset, fits and bounds according to `method`, and measures
/// the held-out risk. `split_rng` fixes the split; callers pass identically
/// seeded generators to compare methods on the same split.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_task<R: Rng + ?Sized>(
    task: &Task,
    id: TaskId,
    proportion: f64,
    method: Method,
    ctx: MethodContext<'_>,
    fmap: &FeatureMap,
    config: &LearnerConfig,
    split_rng: &mut R,
) -> Result<BoundRecord> {
    let mode = if method.is_pac_bayes() { SplitMode::PriorRisk } else { SplitMode::TrainTest };
    let split = split_dataset(task, proportion, mode, split_rng)?;
    let first = split.first_points(&task.dataset);
    let second = split.second_points(&task.dataset);
    let mut record = BoundRecord {
        seed: id.seed,
        task_index: id.index,
        method,
        proportion,
        n: task.dataset.len(),
        n_bound: second.len(),
        bound: 1.0,
        empirical_risk: 0.0,
        kl: None,
        heldout_risk: 0.0,
    };

    if method.is_pac_bayes() {
        let kind = match method {
            Method::Catoni => BoundKind::Catoni {
                beta: ctx.catoni_beta.ok_or_else(|| Error::InvalidArgument("catoni needs a beta".into()))?,
            },
            Method::PacBayesKl => BoundKind::PacBayesKl,
            Method::ConjecturedKl => BoundKind::ConjecturedKl,
            _ => BoundKind::LearnedConvex(
                ctx.learned.ok_or_else(|| Error::InvalidArgument("learned_convex needs a comparator".into()))?,
            ),
        };
        let prior = fit_prior_ddp(&first, fmap, config);
        let fit = optimize_posterior_bound(&second, &prior, kind, fmap, config)?;
        record.bound = fit.bound.get();
        record.empirical_risk = fit.empirical_risk.get();
        record.kl = Some(fit.kl);
        record.heldout_risk = gibbs_risk(&fit.posterior, &task.heldout, fmap)?.get();
    } else {
        let q = erm_train(&first, fmap, config);
        let (test_risk, errors) = bayes_classifier_risk(&q, &second, fmap)?;
        let m = second.len();
        record.bound = match method {
            Method::BinomialTest => binomial_tail_inverse(m, errors, config.delta)?,
            _ => chernoff_test_bound(test_risk, m, config.delta)?,
        }
        .get();
        record.empirical_risk = test_risk.get();
        record.heldout_risk = bayes_classifier_risk(&q, &task.heldout, fmap)?.0.get();
    }
    Ok(record)
}
