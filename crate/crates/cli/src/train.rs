use std::path::{Path, PathBuf};

use pblab_core::delta_optimizer::expected_pac_bayes_kl;
use pblab_core::{train_delta, IMode, RiskKlDistribution};

use crate::config::{train_spec, ConfigFile};
use crate::output::{ensure_dir, full, sig12, write_file};
use crate::svg::{LineChart, Series};

pub const SUMMARY_HEADER: &str = "atoms,n,delta,hidden,iterations_run,best_objective,final_objective,\
expected_conjectured,expected_pac_bayes_kl_exact,optimal_catoni,catoni_beta_star,skipped_steps,dominance_violations";

pub fn run(config: &Path, out: Option<PathBuf>, plots: bool) -> anyhow::Result<()> {
    let mut spec = train_spec(&ConfigFile::load(config)?)?;
    if let Some(dir) = out {
        spec.out = dir;
    }
    let dist = RiskKlDistribution::new(&spec.atoms)?;
    let t = &spec.train;
    log::info!(
        "training a {}-unit comparator on {} atoms for up to {} iterations",
        t.hidden,
        spec.atoms.len(),
        t.iterations
    );
    let (params, trace) = train_delta(t, &dist)?;
    let kl_exact = expected_pac_bayes_kl(&dist, t.n, t.delta, IMode::Exact)?;
    let last = trace.records.last().copied();
    let final_objective = last.map_or(f64::NAN, |r| r.objective);
    let iterations_run = last.map_or(0, |r| r.iteration);

    ensure_dir(&spec.out)?;
    write_file(&spec.out.join("trace.csv"), &trace.to_csv())?;
    write_file(&spec.out.join("params.txt"), &params.to_text())?;
    let atoms = spec.atoms.iter().map(|(q, kl, w)| format!("{q}:{kl}:{w}")).collect::<Vec<_>>().join(" ");
    let row = [
        atoms,
        t.n.to_string(),
        full(t.delta),
        t.hidden.to_string(),
        iterations_run.to_string(),
        full(trace.best_objective),
        full(final_objective),
        full(trace.expected_conjectured),
        full(kl_exact),
        full(trace.best_catoni_value),
        full(trace.best_catoni_beta),
        trace.skipped_steps.to_string(),
        trace.dominance_violations.to_string(),
    ];
    let mut w = csv::Writer::from_path(spec.out.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER.split(','))?;
    w.write_record(&row)?;
    w.flush()?;

    if plots {
        let series = |name: &str, f: fn(&pblab_core::TrainRecord) -> f64, dashed| Series {
            name: name.into(),
            points: trace.records.iter().map(|r| (r.iteration as f64, f(r))).collect(),
            dashed,
        };
        let chart = LineChart {
            title: "learned comparator: expected bound minus references".into(),
            x_label: "iteration".into(),
            y_label: "gap".into(),
            log_x: true,
            log_y: false,
            series: vec![
                series("minus conjectured", |r| r.gap_conjectured, false),
                series("minus best Catoni", |r| r.gap_best_catoni, true),
            ],
        };
        write_file(&spec.out.join("trace.svg"), &chart.render())?;
    }

    println!("best_objective {}", sig12(trace.best_objective));
    println!("expected_conjectured {}", sig12(trace.expected_conjectured));
    println!("expected_pac_bayes_kl_exact {}", sig12(kl_exact));
    println!("optimal_catoni {}", sig12(trace.best_catoni_value));
    println!("catoni_beta_star {}", sig12(trace.best_catoni_beta));
    Ok(())
}
