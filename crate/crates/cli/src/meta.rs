use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pblab_core::{aggregate, run_meta, BoundRecord, Method, RecordKey};

use crate::config::{meta_spec, ConfigFile};
use crate::invalid;
use crate::output::{ensure_dir, full, sig12, write_file};
use crate::svg::{LineChart, Series};

pub const UNION_NOTE: &str =
    "# proportions are swept without a union bound: each row is a valid bound for its proportion alone";
pub const RECORD_HEADER: [&str; 10] =
    ["seed", "task_index", "method", "proportion", "n", "n_bound", "bound", "empirical_risk", "kl", "heldout_risk"];
pub const AGGREGATE_HEADER: [&str; 9] = [
    "method",
    "proportion",
    "tasks",
    "mean_bound",
    "bound_2se",
    "mean_heldout_risk",
    "heldout_2se",
    "violation_rate",
    "violation_limit",
];
pub const SELECTION_HEADER: [&str; 5] =
    ["proportion", "n_risk", "meta_train_atoms", "catoni_beta", "learned_log_moment"];

fn record_row(r: &BoundRecord) -> [String; 10] {
    [
        r.seed.to_string(),
        r.task_index.to_string(),
        r.method.name().to_string(),
        full(r.proportion),
        r.n.to_string(),
        r.n_bound.to_string(),
        full(r.bound),
        full(r.empirical_risk),
        r.kl.map(full).unwrap_or_default(),
        full(r.heldout_risk),
    ]
}

fn parse_row(row: &csv::StringRecord, line: u64) -> anyhow::Result<BoundRecord> {
    let field = |i: usize| row.get(i).ok_or_else(|| invalid(format!("records line {line}: missing column {i}")));
    let num = |i: usize| -> anyhow::Result<f64> {
        field(i)?.parse().map_err(|e| invalid(format!("records line {line}, column {}: {e}", RECORD_HEADER[i])))
    };
    let int = |i: usize| -> anyhow::Result<u64> {
        field(i)?.parse().map_err(|e| invalid(format!("records line {line}, column {}: {e}", RECORD_HEADER[i])))
    };
    let kl = match field(8)? {
        "" => None,
        _ => Some(num(8)?),
    };
    Ok(BoundRecord {
        seed: int(0)?,
        task_index: int(1)?,
        method: Method::parse(field(2)?)?,
        proportion: num(3)?,
        n: int(4)? as usize,
        n_bound: int(5)? as usize,
        bound: num(6)?,
        empirical_risk: num(7)?,
        kl,
        heldout_risk: num(9)?,
    })
}

/// Rows of an existing per-task CSV.
pub fn read_records(path: &Path) -> anyhow::Result<Vec<BoundRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if reader.headers()?.iter().ne(RECORD_HEADER) {
        return Err(invalid(format!("{}: unexpected header", path.display())));
    }
    reader.records().enumerate().map(|(i, row)| parse_row(&row?, i as u64 + 2)).collect()
}

pub fn run(config: &Path, out: Option<PathBuf>, resume: bool, plots: bool) -> anyhow::Result<()> {
    let mut spec = meta_spec(&ConfigFile::load(config)?)?;
    if let Some(dir) = out {
        spec.out = dir;
    }
    let m = &spec.meta;
    ensure_dir(&spec.out)?;
    let records_path = spec.out.join("records.csv");
    let existing = if resume && records_path.exists() { read_records(&records_path)? } else { Vec::new() };
    let done: HashSet<RecordKey> = existing.iter().map(RecordKey::of).collect();
    log::info!("{} rows already present", done.len());

    let outcome = run_meta(m, |k| done.contains(k))?;

    let append = resume && records_path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&records_path)
        .with_context(|| format!("opening {}", records_path.display()))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(file);
    if !append {
        w.write_record([UNION_NOTE])?;
        w.write_record(RECORD_HEADER)?;
    }
    for r in &outcome.records {
        w.write_record(record_row(r))?;
    }
    w.flush()?;

    let mut all = existing;
    all.extend(outcome.records.iter().cloned());
    let aggregates = aggregate(&all, m.learner.delta, m.task.heldout_size);
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(spec.out.join("aggregate.csv"))?;
    w.write_record([UNION_NOTE])?;
    w.write_record(AGGREGATE_HEADER)?;
    for a in &aggregates {
        w.write_record([
            a.method.name().to_string(),
            full(a.proportion),
            a.tasks.to_string(),
            full(a.mean_bound),
            full(a.bound_2se),
            full(a.mean_heldout),
            full(a.heldout_2se),
            full(a.violation_rate),
            full(a.violation_limit),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(spec.out.join("selections.csv"))?;
    w.write_record(SELECTION_HEADER)?;
    for s in &outcome.selections {
        w.write_record([
            full(s.proportion),
            s.n_risk.to_string(),
            s.atoms.len().to_string(),
            s.catoni_beta.map(full).unwrap_or_default(),
            s.learned.as_ref().map(|l| full(l.log_i)).unwrap_or_default(),
        ])?;
        if let Some(l) = &s.learned {
            write_file(&spec.out.join(format!("comparator_p{:.3}.txt", s.proportion)), &l.params.to_text())?;
        }
    }
    w.flush()?;

    if plots {
        let mut methods: Vec<Method> = aggregates.iter().map(|a| a.method).collect();
        methods.dedup();
        let mut series = Vec::new();
        for method in methods {
            let cells: Vec<_> = aggregates.iter().filter(|a| a.method == method).collect();
            series.push(Series {
                name: format!("{method} bound"),
                points: cells.iter().map(|a| (a.proportion, a.mean_bound)).collect(),
                dashed: false,
            });
            series.push(Series {
                name: format!("{method} risk"),
                points: cells.iter().map(|a| (a.proportion, a.mean_heldout)).collect(),
                dashed: true,
            });
        }
        let chart = LineChart {
            title: "mean bound and held-out risk".into(),
            x_label: "prior / train proportion".into(),
            y_label: "risk".into(),
            log_x: false,
            log_y: false,
            series,
        };
        write_file(&spec.out.join("meta.svg"), &chart.render())?;
    }

    println!("method proportion tasks mean_bound bound_2se mean_heldout_risk violation_rate violation_limit");
    for a in &aggregates {
        println!(
            "{} {} {} {} {} {} {} {}",
            a.method,
            sig12(a.proportion),
            a.tasks,
            sig12(a.mean_bound),
            sig12(a.bound_2se),
            sig12(a.mean_heldout),
            sig12(a.violation_rate),
            sig12(a.violation_limit)
        );
    }
    Ok(())
}
