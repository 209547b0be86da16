//! The meta-learning harness: a meta-train task set fixes the Catoni β and
//! trains a convex comparator for every prior proportion, then every
//! (method, proportion) pair is evaluated on an independent meta-test set.
//!
//! The proportion sweep does not take a union bound over proportions; each
//! row is a valid bound for its proportion considered alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::delta_optimizer::{optimal_catoni_expected, train_delta, RiskKlDistribution, TrainConfig};
use crate::error::{Error, Result};
use crate::gibbs_learner::{
    evaluate_task, fit_prior_ddp, optimize_posterior_bound, BoundKind, BoundRecord, FeatureMap, LearnedComparator,
    LearnerConfig, Method, MethodContext, TaskId,
};
use crate::i_delta::i_delta_eval_refined;
use crate::scalar_bounds::BoundBudget;
use crate::synthetic_tasks::{sample_task, split_dataset, task_rng, SplitMode, Task, TaskConfig};

/// Meta-train task `i` uses RNG stream `META_TRAIN_STREAM + i`; meta-test
/// task `i` uses stream `i`.
pub const META_TRAIN_STREAM: u64 = 1 << 62;
const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub seed: u64,
    pub task: TaskConfig,
    pub feature_lengthscale: f64,
    pub learner: LearnerConfig,
    pub proportions: Vec<f64>,
    pub methods: Vec<Method>,
    pub meta_train_tasks: usize,
    pub meta_test_tasks: usize,
    /// Comparator training settings; `n` and `delta` are overridden per
    /// proportion.
    pub delta_training: TrainConfig,
    /// `r`-spacing of the moment term used by the learned comparator's bounds.
    pub moment_spacing: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            seed: 0,
            task: TaskConfig::default(),
            feature_lengthscale: 0.2,
            learner: LearnerConfig::default(),
            proportions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            methods: Method::ALL.to_vec(),
            meta_train_tasks: 64,
            meta_test_tasks: 512,
            delta_training: TrainConfig { hidden: 64, iterations: 1500, ..TrainConfig::default() },
            moment_spacing: 1e-5,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        BoundBudget::new(0.0, 1, self.learner.delta)?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.proportions.is_empty() || self.methods.is_empty() {
            return bad("at least one proportion and one method are required".into());
        }
        for &p in &self.proportions {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("proportion must lie in [0, 1), got {p}"));
            }
            if self.task.n - (p * self.task.n as f64).round() as usize == 0 {
                return bad(format!("proportion {p} leaves no points for the bound"));
            }
        }
        if self.meta_test_tasks == 0 {
            return bad("meta-test set must be nonempty".into());
        }
        let needs_meta_train = self.methods.iter().any(|m| matches!(m, Method::Catoni | Method::LearnedConvex));
        if needs_meta_train && self.meta_train_tasks == 0 {
            return bad("catoni and learned_convex need a nonempty meta-train set".into());
        }
        Ok(())
    }

    fn needs(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

/// What the meta-train set fixed for one proportion.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub proportion: f64,
    /// Risk-set size the bounds are computed with.
    pub n_risk: usize,
    /// Meta-train `(q, KL)` pairs the choices below were made on.
    pub atoms: Vec<(f64, f64)>,
    pub catoni_beta: Option<f64>,
    pub learned: Option<LearnedComparator>,
}

impl Selection {
    pub fn context(&self) -> MethodContext<'_> {
        MethodContext { catoni_beta: self.catoni_beta, learned: self.learned.as_ref() }
    }
}

/// Identifies a row of the per-task output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub seed: u64,
    pub task_index: u64,
    pub method: Method,
    /// Proportion in thousandths, so keys are exact.
    pub proportion_milli: u32,
}

impl RecordKey {
    pub fn new(seed: u64, task_index: u64, method: Method, proportion: f64) -> Self {
        RecordKey { seed, task_index, method, proportion_milli: proportion_milli(proportion) }
    }

    pub fn of(record: &BoundRecord) -> Self {
        Self::new(record.seed, record.task_index, record.method, record.proportion)
    }
}

fn proportion_milli(proportion: f64) -> u32 {
    (proportion * 1000.0).round() as u32
}

/// Generates `count` tasks from RNG streams `offset, offset + 1, ...`.
pub fn generate_tasks(seed: u64, offset: u64, count: usize, config: &TaskConfig) -> Result<Vec<Task>> {
    (0..count as u64).into_par_iter().map(|i| sample_task(&mut task_rng(seed, offset + i), config)).collect()
}

/// The split RNG of a (task stream, proportion) pair, shared by all methods.
pub fn split_rng(seed: u64, stream: u64, proportion: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT ^ u64::from(proportion_milli(proportion)));
    rng.set_stream(stream);
    rng
}

/// `(q, KL)` of the conjectured-kl posterior on every meta-train task.
fn meta_train_atoms(
    config: &MetaConfig,
    tasks: &[Task],
    proportion: f64,
    fmap: &FeatureMap,
) -> Result<Vec<(f64, f64)>> {
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let mut rng = split_rng(config.seed, META_TRAIN_STREAM + i as u64, proportion);
            let split = split_dataset(task, proportion, SplitMode::PriorRisk, &mut rng)?;
            let prior = fit_prior_ddp(&split.first_points(&task.dataset), fmap, &config.learner);
            let fit = optimize_posterior_bound(
                &split.second_points(&task.dataset),
                &prior,
                BoundKind::ConjecturedKl,
                fmap,
                &config.learner,
            )?;
            Ok((fit.empirical_risk.get(), fit.kl))
        })
        .collect()
}

/// Selects β and trains the comparator for one proportion.
pub fn select_for_proportion(
    config: &MetaConfig,
    meta_train: &[Task],
    proportion: f64,
    fmap: &FeatureMap,
) -> Result<Selection> {
    let n = config.task.n;
    let n_risk = n - (proportion * n as f64).round() as usize;
    let delta = config.learner.delta;
    let mut selection = Selection { proportion, n_risk, atoms: Vec::new(), catoni_beta: None, learned: None };
    if !(config.needs(Method::Catoni) || config.needs(Method::LearnedConvex)) {
        return Ok(selection);
    }
    selection.atoms = meta_train_atoms(config, meta_train, proportion, fmap)?;
    let dist = RiskKlDistribution::uniform(&selection.atoms)?;
    if config.needs(Method::Catoni) {
        let (beta, value) = optimal_catoni_expected(&dist, n_risk, delta)?;
        log::info!("proportion {proportion}: catoni beta {beta} (meta-train expected bound {value})");
        selection.catoni_beta = Some(beta);
    }
    if config.needs(Method::LearnedConvex) {
        let train = TrainConfig { n: n_risk, delta, ..config.delta_training.clone() };
        let (params, trace) = train_delta(&train, &dist)?;
        let log_i = i_delta_eval_refined(&params, n_risk, 1e-3, config.moment_spacing)?.log_value;
        log::info!(
            "proportion {proportion}: learned comparator meta-train objective {} (conjectured {})",
            trace.best_objective,
            trace.expected_conjectured
        );
        selection.learned = Some(LearnedComparator { params, n: n_risk, log_i });
    }
    Ok(selection)
}

/// Mean and spread of one (method, proportion) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub proportion: f64,
    pub tasks: usize,
    pub mean_bound: f64,
    /// Two standard errors of the mean bound.
    pub bound_2se: f64,
    pub mean_heldout: f64,
    pub heldout_2se: f64,
    /// Fraction of tasks with `bound < heldout - noise allowance`.
    pub violation_rate: f64,
    /// `δ + 3 √(δ(1-δ)/T)`.
    pub violation_limit: f64,
}

/// Tolerance for held-out estimation noise, `3 √(0.25 / m)`.
pub fn heldout_allowance(heldout_size: usize) -> f64 {
    3.0 * (0.25 / heldout_size as f64).sqrt()
}

fn mean_and_2se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * (var / n).sqrt())
}

/// Aggregates in `(method, proportion)` order.
pub fn aggregate(records: &[BoundRecord], delta: f64, heldout_size: usize) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, u32)> = records.iter().map(|r| (r.method, RecordKey::of(r).proportion_milli)).collect();
    keys.sort_unstable();
    keys.dedup();
    let allowance = heldout_allowance(heldout_size);
    keys.into_iter()
        .map(|(method, milli)| {
            let cell: Vec<&BoundRecord> =
                records.iter().filter(|r| r.method == method && RecordKey::of(r).proportion_milli == milli).collect();
            let bounds: Vec<f64> = cell.iter().map(|r| r.bound).collect();
            let heldout: Vec<f64> = cell.iter().map(|r| r.heldout_risk).collect();
            let (mean_bound, bound_2se) = mean_and_2se(&bounds);
            let (mean_heldout, heldout_2se) = mean_and_2se(&heldout);
            let t = cell.len() as f64;
            let violations = cell.iter().filter(|r| r.bound < r.heldout_risk - allowance).count();
            Aggregate {
                method,
                proportion: cell[0].proportion,
                tasks: cell.len(),
                mean_bound,
                bound_2se,
                mean_heldout,
                heldout_2se,
                violation_rate: violations as f64 / t,
                violation_limit: delta + 3.0 * (delta * (1.0 - delta) / t).sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaOutcome {
    pub selections: Vec<Selection>,
    /// In (task, proportion, method) order.
    pub records: Vec<BoundRecord>,
}

/// Runs the whole harness; rows whose key satisfies `skip` are not evaluated.
pub fn run_meta<S>(config: &MetaConfig, skip: S) -> Result<MetaOutcome>
where
    S: Fn(&RecordKey) -> bool + Sync,
{
    config.validate()?;
    let fmap = FeatureMap::standard(config.feature_lengthscale)?;
    let needs_meta_train = config.needs(Method::Catoni) || config.needs(Method::LearnedConvex);
    let meta_train = if needs_meta_train {
        generate_tasks(config.seed, META_TRAIN_STREAM, config.meta_train_tasks, &config.task)?
    } else {
        Vec::new()
    };
    let selections = config
        .proportions
        .iter()
        .map(|&p| select_for_proportion(config, &meta_train, p, &fmap))
        .collect::<Result<Vec<_>>>()?;

    let meta_test = generate_tasks(config.seed, 0, config.meta_test_tasks, &config.task)?;
    let mut jobs = Vec::new();
    for task_index in 0..meta_test.len() {
        for (pi, &p) in config.proportions.iter().enumerate() {
            for &method in &config.methods {
                if !skip(&RecordKey::new(config.seed, task_index as u64, method, p)) {
                    jobs.push((task_index, pi, method));
                }
            }
        }
    }
    log::info!("evaluating {} rows on {} meta-test tasks", jobs.len(), meta_test.len());
    let records = jobs
        .par_iter()
        .map(|&(task_index, pi, method)| {
            let selection = &selections[pi];
            let proportion = selection.proportion;
            let mut rng = split_rng(config.seed, task_index as u64, proportion);
            let id = TaskId { seed: config.seed, index: task_index as u64 };
            evaluate_task(
                &meta_test[task_index],
                id,
                proportion,
                method,
                selection.context(),
                &fmap,
                &config.learner,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaOutcome { selections, records })
}
