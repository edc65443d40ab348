//! CSV and JSON writers for experiment results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mpmc::{IterationRecord, Mixture, UpdateStatus};
use serde::Serialize;

use crate::experiments::{OutcomeLabel, StudyResult, StudyVariant, Table1Row};

pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.csv";
pub const SAMPLE_FILE: &str = "sample.csv";

pub const ITERATION_COLUMNS: [&str; 10] = [
    "tag",
    "run",
    "iter",
    "norm_perplexity",
    "norm_ess",
    "shannon_entropy",
    "divergence_estimate",
    "status",
    "vanished",
    "weights",
];

fn status_name(s: &UpdateStatus) -> String {
    match s {
        UpdateStatus::Ok => "ok".into(),
        UpdateStatus::ComponentDegenerate(ds) => {
            let ids: Vec<String> = ds.iter().map(|d| d.to_string()).collect();
            format!("degenerate:{}", ids.join(";"))
        }
        UpdateStatus::NumericalFailure => "numerical_failure".into(),
    }
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

/// One row per iteration. `weights` are the slot weights of the proposal the
/// iteration sampled from, defensive slot last.
pub fn write_iterations<'a, W, I>(out: W, rows: I) -> anyhow::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, usize, &'a IterationRecord<f64>)>,
{
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(ITERATION_COLUMNS)?;
    for (tag, run, r) in rows {
        let d = &r.diagnostics;
        wtr.write_record([
            tag.to_string(),
            run.to_string(),
            r.iter.to_string(),
            d.norm_perplexity.to_string(),
            d.norm_ess.to_string(),
            d.shannon_entropy.to_string(),
            d.divergence_estimate.to_string(),
            status_name(&r.update_status),
            joined(r.vanished.iter().map(|v| v.to_string())),
            joined(r.mixture_before.effective_weights().iter().map(|w| w.to_string())),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_iterations_file<'a, I>(dir: &Path, rows: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = (&'a str, usize, &'a IterationRecord<f64>)>,
{
    write_iterations(BufWriter::new(File::create(dir.join(ITERATIONS_FILE))?), rows)
}

pub const COMPONENTS_FILE: &str = "components.csv";
pub const COMPONENT_COLUMNS: [&str; 8] = ["tag", "run", "iter", "component", "weight", "nu", "mu", "sigma"];

/// Parameters of every adaptive component of the proposal each iteration
/// sampled from. `mu` and the row-major `sigma` are `;`-separated.
pub fn write_components<'a, W, I>(out: W, rows: I) -> anyhow::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, usize, &'a IterationRecord<f64>)>,
{
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(COMPONENT_COLUMNS)?;
    for (tag, run, r) in rows {
        let m = &r.mixture_before;
        for d in 0..m.n_components() {
            let comps = m.components();
            wtr.write_record([
                tag.to_string(),
                run.to_string(),
                r.iter.to_string(),
                d.to_string(),
                m.weights()[d].to_string(),
                comps.nu(d).map_or(String::new(), |v| v.to_string()),
                joined(comps.mu(d).iter().map(|v| v.to_string())),
                joined(comps.sigma(d).entries().iter().map(|v| v.to_string())),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_components_file<'a, I>(dir: &Path, rows: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = (&'a str, usize, &'a IterationRecord<f64>)>,
{
    write_components(BufWriter::new(File::create(dir.join(COMPONENTS_FILE))?), rows)
}

pub fn write_summary<S: Serialize>(dir: &Path, summary: &S) -> anyhow::Result<()> {
    let mut f = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn mixture_value(m: &Mixture<f64>) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::from_str(&m.to_json()?)?)
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Per-seed rows followed by a `mean` row for each proposal.
pub fn write_table1<W: Write>(out: W, rows: &[Table1Row]) -> anyhow::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["proposal", "seed", "norm_perplexity", "norm_ess", "var_x1"])?;
    for row in rows {
        let seeds = row.per_seed.iter().enumerate().map(|(i, q)| (i.to_string(), q));
        for (seed, q) in seeds.chain(std::iter::once(("mean".to_string(), &row.mean))) {
            wtr.write_record([
                row.proposal.clone(),
                seed,
                q.norm_perplexity.to_string(),
                q.norm_ess.to_string(),
                q.var_x1.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_table2<W: Write>(out: W, study: &StudyResult) -> anyhow::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["variant".to_string()];
    header.extend(OutcomeLabel::ALL.iter().map(|l| l.short().to_string()));
    wtr.write_record(&header)?;
    for v in StudyVariant::ALL {
        let mut rec = vec![v.name().to_string()];
        rec.extend(OutcomeLabel::ALL.iter().map(|&l| study.count(v, l).to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
