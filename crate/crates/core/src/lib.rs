#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

//! Computation, inversion and optimization of PAC-Bayes and test-set
//! generalisation bounds for small datasets.

pub mod adam;
pub mod comparator;
pub mod convex_delta;
pub mod delta_optimizer;
pub mod error;
pub mod experiments;
pub mod gibbs_learner;
pub mod i_delta;
pub mod inversion;
pub mod numeric;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod scalar_bounds;
pub mod synthetic_tasks;

pub use comparator::{CatoniComparator, Comparator, KlComparator};
pub use convex_delta::{monotone_rectify, ConvexDeltaParams, GridFunction, Rectified};
pub use delta_optimizer::{
    expected_conjectured, expected_delta_bound, halfrisk_analytics, optimal_catoni_expected, train_delta,
    worked_example, HalfRiskRecord, RiskKlDistribution, TrainConfig, TrainRecord, TrainTrace, WorkedExample,
};
pub use error::{Error, Result};
pub use experiments::{aggregate, run_meta, Aggregate, MetaConfig, MetaOutcome, RecordKey, Selection};
pub use gibbs_learner::{
    bayes_classifier_risk, erm_train, evaluate_task, fit_prior_ddp, gibbs_risk, kl_gaussians, optimize_posterior_bound,
    BoundKind, BoundRecord, FeatureMap, GaussianMeasure, LearnedComparator, LearnerConfig, Method, MethodContext,
    OptimConfig, PosteriorFit, TaskId,
};
pub use i_delta::{i_delta_eval, i_delta_grad_params, i_kl_exact, IDeltaResult};
pub use inversion::{invert_bound, invert_bound_extended, invert_derivative, ExtendedInversion};
pub use scalar_bounds::{BoundBudget, IMode, OccamKind, Risk};
