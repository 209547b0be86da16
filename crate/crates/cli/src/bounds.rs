use clap::{Args, ValueEnum};

use pblab_core::scalar_bounds::{
    binomial_tail_inverse, catoni_inverse, chernoff_test_bound, conjectured_kl_bound, occam_bound, pac_bayes_kl_bound,
};
use pblab_core::{BoundBudget, IMode, OccamKind, Risk};

use crate::invalid;
use crate::output::sig12;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Binomial,
    Chernoff,
    Catoni,
    Kl,
    Conjectured,
    OccamBinomial,
    OccamChernoff,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Moment {
    /// The exact moment of the kl comparator.
    Exact,
    /// The `2√N` relaxation.
    Maurer,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Empirical risk on the bound set.
    #[arg(long)]
    pub q: Option<f64>,
    /// `KL(Q || P)`.
    #[arg(long)]
    pub kl: Option<f64>,
    /// Size of the set the PAC-Bayes or Occam bound is computed on.
    #[arg(long)]
    pub n: Option<usize>,
    /// Test-set size.
    #[arg(long)]
    pub m: Option<usize>,
    /// Test-set error count.
    #[arg(long)]
    pub k: Option<usize>,
    /// Catoni inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Prior mass of the hypothesis for Occam bounds.
    #[arg(long)]
    pub prior_mass: Option<f64>,
    #[arg(long, value_enum, default_value_t = Moment::Exact)]
    pub moment: Moment,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}

fn need<T>(value: Option<T>, flag: &str, kind: Kind) -> anyhow::Result<T> {
    let name = kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    value.ok_or_else(|| invalid(format!("--kind {name} requires --{flag}")))
}

pub fn evaluate(a: &BoundsArgs) -> anyhow::Result<f64> {
    let kind = a.kind;
    let q = || -> anyhow::Result<Risk> { Ok(Risk::new(need(a.q, "q", kind)?)?) };
    let budget = || -> anyhow::Result<BoundBudget> {
        Ok(BoundBudget::new(need(a.kl, "kl", kind)?, need(a.n, "n", kind)?, a.delta)?)
    };
    let value = match kind {
        Kind::Binomial => binomial_tail_inverse(need(a.m, "m", kind)?, need(a.k, "k", kind)?, a.delta)?,
        Kind::Chernoff => {
            let m = need(a.m, "m", kind)?;
            let q_test = match (a.q, a.k) {
                (Some(_), Some(_)) => return Err(invalid("give either --q or --k for chernoff, not both")),
                (None, Some(k)) if k <= m => Risk::new(k as f64 / m as f64)?,
                (None, Some(k)) => return Err(invalid(format!("--k {k} exceeds --m {m}"))),
                _ => q()?,
            };
            chernoff_test_bound(q_test, m, a.delta)?
        }
        Kind::Catoni => catoni_inverse(q()?, &budget()?, need(a.beta, "beta", kind)?),
        Kind::Kl => {
            let mode = match a.moment {
                Moment::Exact => IMode::Exact,
                Moment::Maurer => IMode::Maurer2SqrtN,
            };
            pac_bayes_kl_bound(q()?, &budget()?, mode)
        }
        Kind::Conjectured => conjectured_kl_bound(q()?, &budget()?),
        Kind::OccamBinomial | Kind::OccamChernoff => {
            let occam = if matches!(kind, Kind::OccamBinomial) { OccamKind::Binomial } else { OccamKind::Chernoff };
            occam_bound(occam, q()?, need(a.n, "n", kind)?, need(a.prior_mass, "prior-mass", kind)?, a.delta)?
        }
    };
    Ok(value.get())
}

pub fn run(args: &BoundsArgs) -> anyhow::Result<()> {
    if let Some(beta) = args.beta {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("--beta must be positive, got {beta}")));
        }
    }
    println!("{}", sig12(evaluate(args)?));
    Ok(())
}
