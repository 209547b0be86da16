use nalgebra::{DMatrix, DVector};
use pblab_core::experiments::split_rng;
use pblab_core::synthetic_tasks::{sample_task, split_dataset, task_rng, Point, SplitMode, Task, TaskConfig};
use pblab_core::{
    evaluate_task, fit_prior_ddp, gibbs_risk, kl_gaussians, optimize_posterior_bound, BoundBudget, BoundKind,
    FeatureMap, GaussianMeasure, LearnerConfig, Method, MethodContext, TaskId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, spread: f64) -> GaussianMeasure {
    let mean = DVector::from_fn(dim, |_, _| rng.random_range(-spread..spread));
    let mut chol = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..i {
            chol[(i, j)] = rng.random_range(-0.3..0.3);
        }
        chol[(i, i)] = rng.random_range(0.4..1.2);
    }
    GaussianMeasure::new(mean, chol).unwrap()
}

fn log_density(m: &GaussianMeasure, x: &DVector<f64>) -> f64 {
    let z = m.chol().solve_lower_triangular(&(x - m.mean())).unwrap();
    -0.5 * z.norm_squared() - 0.5 * m.log_det() - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn gibbs_risk_matches_sampled_classifiers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fmap = FeatureMap::standard(0.2).unwrap();
    let q = random_measure(&mut rng, fmap.dim(), 0.5);
    let points: Vec<Point> = (0..40)
        .map(|_| Point { x: rng.random_range(-2.0..2.0), y: if rng.random::<bool>() { 1.0 } else { -1.0 } })
        .collect();
    let features: Vec<DVector<f64>> = points.iter().map(|p| fmap.features(p.x)).collect();

    let draws = 20_000;
    let mut errors = 0usize;
    for _ in 0..draws {
        let w = q.sample(&mut rng);
        errors += points.iter().zip(&features).filter(|(p, f)| p.y * f.dot(&w) < 0.0).count();
    }
    let sampled = errors as f64 / (draws * points.len()) as f64;
    let exact = gibbs_risk(&q, &points, &fmap).unwrap().get();
    // per-draw risks are bounded in [0, 1], so the standard error is below 0.5/√draws
    assert!((sampled - exact).abs() < 4.0 * 0.5 / (draws as f64).sqrt(), "sampled {sampled}, exact {exact}");
}

#[test]
fn gaussian_kl_matches_sampled_log_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let q = random_measure(&mut rng, 4, 1.0);
        let p = random_measure(&mut rng, 4, 1.0);
        let draws = 100_000;
        let ratios: Vec<f64> = (0..draws)
            .map(|_| {
                let x = q.sample(&mut rng);
                log_density(&q, &x) - log_density(&p, &x)
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / draws as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let exact = kl_gaussians(&q, &p).unwrap();
        assert!((mean - exact).abs() < 5.0 * se, "sampled {mean} ± {se}, exact {exact}");
    }
}

fn quick_config() -> LearnerConfig {
    let mut c = LearnerConfig::default();
    c.prior.max_steps = 200;
    c.posterior.max_steps = 300;
    c
}

#[test]
fn prior_ignores_the_risk_set() {
    let task = sample_task(&mut task_rng(3, 0), &TaskConfig::default()).unwrap();
    let fmap = FeatureMap::standard(0.2).unwrap();
    let mut config = quick_config();
    // with no posterior steps the reported held-out risk is that of the prior
    config.posterior.max_steps = 0;
    let ctx = MethodContext { catoni_beta: Some(2.0), learned: None };
    let id = TaskId { seed: 3, index: 0 };
    let run =
        |t: &Task| evaluate_task(t, id, 0.4, Method::Catoni, ctx, &fmap, &config, &mut split_rng(3, 0, 0.4)).unwrap();
    let clean = run(&task);

    let split = split_dataset(&task, 0.4, SplitMode::PriorRisk, &mut split_rng(3, 0, 0.4)).unwrap();
    let mut tainted = task.clone();
    for &i in &split.second_part {
        tainted.dataset[i].y = -tainted.dataset[i].y;
        tainted.dataset[i].x = (tainted.dataset[i].x * 0.5).clamp(-2.0, 2.0);
    }
    let dirty = run(&tainted);
    assert_eq!(clean.kl, Some(0.0));
    assert_eq!(clean.heldout_risk, dirty.heldout_risk);
    assert_ne!(clean.empirical_risk, dirty.empirical_risk);
}

#[test]
fn separable_prior_set_gives_a_low_risk_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fmap = FeatureMap::standard(0.2).unwrap();
    let mut sample = |n: usize| -> Vec<Point> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-2.0..2.0);
                Point { x, y: if x < 0.0 { -1.0 } else { 1.0 } }
            })
            .collect()
    };
    let prior_set = sample(60);
    let fresh = sample(500);
    let prior = fit_prior_ddp(&prior_set, &fmap, &LearnerConfig::default());
    let risk = gibbs_risk(&prior, &fresh, &fmap).unwrap().get();
    assert!(risk < 0.1, "risk {risk}");
}

#[test]
fn catoni_posterior_improves_on_the_prior() {
    let fmap = FeatureMap::standard(0.2).unwrap();
    let config = quick_config();
    let tasks = 20;
    let mut improved = 0;
    for index in 0..tasks {
        let task = sample_task(&mut task_rng(21, index), &TaskConfig::default()).unwrap();
        let split = split_dataset(&task, 0.4, SplitMode::PriorRisk, &mut split_rng(21, index, 0.4)).unwrap();
        let risk_set = split.second_points(&task.dataset);
        let prior = fit_prior_ddp(&split.first_points(&task.dataset), &fmap, &config);
        let kind = BoundKind::Catoni { beta: 2.0 };
        let at_prior = kind.value(
            gibbs_risk(&prior, &risk_set, &fmap).unwrap(),
            &BoundBudget::new(0.0, risk_set.len(), config.delta).unwrap(),
        );
        let fit = optimize_posterior_bound(&risk_set, &prior, kind, &fmap, &config).unwrap();
        assert!(fit.bound.get() <= at_prior.get());
        if fit.bound.get() < at_prior.get() - 1e-3 {
            improved += 1;
        }
    }
    assert!(improved * 10 >= tasks * 9, "improved on {improved} of {tasks}");
}
