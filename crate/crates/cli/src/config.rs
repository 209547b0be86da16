//! Experiment configuration: flat `key = value` lines under `[section]`
//! headers. Unknown sections or keys are rejected so typos surface early.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use pblab_core::gibbs_learner::OptimConfig;
use pblab_core::synthetic_tasks::TaskConfig;
use pblab_core::{LearnerConfig, MetaConfig, Method, TrainConfig};

use crate::invalid;

pub struct ConfigFile {
    ini: Ini,
    origin: String,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let ini = Ini::load_from_file(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Ok(ConfigFile { ini, origin: path.display().to_string() })
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        Ok(ConfigFile { ini, origin: "config".into() })
    }

    /// Fails on any section or key outside `known`.
    pub fn check_known(&self, known: &[(&str, &[&str])]) -> anyhow::Result<()> {
        for (section, props) in self.ini.iter() {
            let Some(name) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(invalid(format!("{}: key `{key}` outside any section", self.origin)));
                }
                continue;
            };
            let Some((_, keys)) = known.iter().find(|(s, _)| *s == name) else {
                return Err(invalid(format!("{}: unknown section [{name}]", self.origin)));
            };
            for (key, _) in props.iter() {
                if !keys.contains(&key) {
                    return Err(invalid(format!("{}: unknown key `{key}` in [{name}]", self.origin)));
                }
            }
        }
        Ok(())
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(section, key)
            .map(|v| v.parse().map_err(|e| invalid(format!("{}: [{section}] {key} = `{v}`: {e}", self.origin))))
            .transpose()
    }

    pub fn set<T: FromStr>(&self, section: &str, key: &str, target: &mut T) -> anyhow::Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(section, key)? {
            *target = v;
        }
        Ok(())
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> anyhow::Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(section, key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| invalid(format!("{}: [{section}] {key}: `{s}`: {e}", self.origin))))
            .collect::<anyhow::Result<Vec<T>>>()
            .map(Some)
    }
}

/// A `train-delta` run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    /// `(q, KL, weight)` atoms.
    pub atoms: Vec<(f64, f64, f64)>,
    pub train: TrainConfig,
    pub out: PathBuf,
}

/// `q:kl` or `q:kl:weight`.
fn parse_atom(s: &str) -> anyhow::Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| invalid(format!("atom `{s}`: {e}")));
    match parts.as_slice() {
        [q, kl] => Ok((num(q)?, num(kl)?, 1.0)),
        [q, kl, w] => Ok((num(q)?, num(kl)?, num(w)?)),
        _ => Err(invalid(format!("atom `{s}` must be q:kl or q:kl:weight"))),
    }
}

pub fn train_spec(file: &ConfigFile) -> anyhow::Result<TrainSpec> {
    file.check_known(&[
        ("distribution", &["atoms"]),
        (
            "training",
            &[
                "n",
                "delta",
                "hidden",
                "iterations",
                "learning_rate",
                "seed",
                "eval_every",
                "rescan_every",
                "coarse_spacing",
                "fine_spacing",
                "target_gap",
            ],
        ),
        ("output", &["dir"]),
    ])?;
    let atoms = file
        .list::<String>("distribution", "atoms")?
        .unwrap_or_default()
        .iter()
        .map(|s| parse_atom(s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if atoms.is_empty() {
        return Err(invalid("[distribution] atoms must list at least one q:kl pair"));
    }
    let mut t = TrainConfig::default();
    file.set("training", "n", &mut t.n)?;
    file.set("training", "delta", &mut t.delta)?;
    file.set("training", "hidden", &mut t.hidden)?;
    file.set("training", "iterations", &mut t.iterations)?;
    file.set("training", "learning_rate", &mut t.learning_rate)?;
    file.set("training", "seed", &mut t.seed)?;
    file.set("training", "eval_every", &mut t.eval_every)?;
    file.set("training", "rescan_every", &mut t.rescan_every)?;
    file.set("training", "coarse_spacing", &mut t.coarse_spacing)?;
    file.set("training", "fine_spacing", &mut t.fine_spacing)?;
    t.target_gap = file.get("training", "target_gap")?;
    let out = file.get::<String>("output", "dir")?.unwrap_or_else(|| "train-delta-out".into());
    Ok(TrainSpec { atoms, train: t, out: PathBuf::from(out) })
}

/// A `meta` run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSpec {
    pub meta: MetaConfig,
    pub out: PathBuf,
}

fn optim(file: &ConfigFile, prefix: &str, base: OptimConfig) -> anyhow::Result<OptimConfig> {
    let mut o = base;
    file.set("learner", &format!("{prefix}_learning_rate"), &mut o.learning_rate)?;
    file.set("learner", &format!("{prefix}_max_steps"), &mut o.max_steps)?;
    file.set("learner", &format!("{prefix}_patience"), &mut o.patience)?;
    file.set("learner", &format!("{prefix}_min_improvement"), &mut o.min_improvement)?;
    Ok(o)
}

pub fn meta_spec(file: &ConfigFile) -> anyhow::Result<MetaSpec> {
    file.check_known(&[
        ("meta", &["seed", "n", "delta", "proportions", "methods", "meta_train_tasks", "meta_test_tasks"]),
        (
            "task",
            &[
                "lengthscale",
                "variance",
                "input_low",
                "input_high",
                "heldout_size",
                "balance_size",
                "balance_min_fraction",
                "jitter",
                "max_draws",
            ],
        ),
        (
            "learner",
            &[
                "feature_lengthscale",
                "sigma0",
                "prior_learning_rate",
                "prior_max_steps",
                "prior_patience",
                "prior_min_improvement",
                "posterior_learning_rate",
                "posterior_max_steps",
                "posterior_patience",
                "posterior_min_improvement",
            ],
        ),
        ("comparator", &["hidden", "iterations", "learning_rate", "seed", "eval_every", "moment_spacing"]),
        ("output", &["dir"]),
    ])?;
    let mut m = MetaConfig::default();
    file.set("meta", "seed", &mut m.seed)?;
    file.set("meta", "meta_train_tasks", &mut m.meta_train_tasks)?;
    file.set("meta", "meta_test_tasks", &mut m.meta_test_tasks)?;
    if let Some(p) = file.list("meta", "proportions")? {
        m.proportions = p;
    }
    if let Some(names) = file.list::<String>("meta", "methods")? {
        m.methods = names.iter().map(|s| Method::parse(s)).collect::<Result<Vec<_>, _>>()?;
    }

    let mut task = TaskConfig::default();
    file.set("meta", "n", &mut task.n)?;
    file.set("task", "lengthscale", &mut task.lengthscale)?;
    file.set("task", "variance", &mut task.variance)?;
    file.set("task", "input_low", &mut task.input_low)?;
    file.set("task", "input_high", &mut task.input_high)?;
    file.set("task", "heldout_size", &mut task.heldout_size)?;
    file.set("task", "balance_size", &mut task.balance_size)?;
    file.set("task", "balance_min_fraction", &mut task.balance_min_fraction)?;
    file.set("task", "jitter", &mut task.jitter)?;
    file.set("task", "max_draws", &mut task.max_draws)?;
    m.task = task;

    let mut learner = LearnerConfig::default();
    file.set("meta", "delta", &mut learner.delta)?;
    file.set("learner", "sigma0", &mut learner.sigma0)?;
    learner.prior = optim(file, "prior", learner.prior)?;
    learner.posterior = optim(file, "posterior", learner.posterior)?;
    m.learner = learner;
    file.set("learner", "feature_lengthscale", &mut m.feature_lengthscale)?;

    file.set("comparator", "hidden", &mut m.delta_training.hidden)?;
    file.set("comparator", "iterations", &mut m.delta_training.iterations)?;
    file.set("comparator", "learning_rate", &mut m.delta_training.learning_rate)?;
    file.set("comparator", "seed", &mut m.delta_training.seed)?;
    file.set("comparator", "eval_every", &mut m.delta_training.eval_every)?;
    file.set("comparator", "moment_spacing", &mut m.moment_spacing)?;

    m.validate()?;
    let out = file.get::<String>("output", "dir")?.unwrap_or_else(|| "meta-out".into());
    Ok(MetaSpec { meta: m, out: PathBuf::from(out) })
}
