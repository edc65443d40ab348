//! Executes an [`ExperimentConfig`] and writes its output files.

use std::fs::File;
use std::io::BufWriter;

use anyhow::{bail, Context};
use mpmc::adapt::{self, perturbed_gaussian_mixture, perturbed_t_mixture};
use mpmc::{
    perplexity, sn_estimate, AdaptConfig, Diagnostics, GaussianComponent, Mixture, ProbitDataset, ProbitPosterior,
    TargetDensity, Termination, ToyTarget,
};
use serde::Serialize;

use crate::config::{variant_name, Experiment, ExperimentConfig, FamilySpec, TargetKind};
use crate::experiments::{
    classify_outcome, rng_for, run_pima, run_table1, run_table2_study, toy_q0, OutcomeClass, PimaConfig, RunSummary,
    StudyConfig, StudyVariant, Table1Row,
};
use crate::output;

pub const TRACE_FILE: &str = "trace.csv";

pub fn execute(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    output::ensure_dir(&cfg.out)?;
    match cfg.experiment {
        Experiment::Table1 => table1(cfg),
        Experiment::Table2 => table2(cfg),
        Experiment::Pima => pima(cfg),
        Experiment::Run => custom(cfg),
    }
}

fn load_data(cfg: &ExperimentConfig) -> anyhow::Result<ProbitDataset> {
    Ok(match &cfg.data {
        Some(path) => mpmc::load_pima_csv(path).with_context(|| format!("loading {}", path.display()))?,
        None => ProbitDataset::pima(),
    })
}

#[derive(Serialize)]
struct Table1Summary<'a> {
    config: &'a ExperimentConfig,
    rows: &'a [Table1Row],
}

fn table1(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let rows = run_table1(cfg.dim, cfg.shift, cfg.particles, cfg.runs, cfg.seed)?;
    output::write_table1(BufWriter::new(File::create(cfg.out.join(output::TABLE_FILE))?), &rows)?;
    output::write_summary(&cfg.out, &Table1Summary { config: cfg, rows: &rows })
}

#[derive(Serialize)]
struct Table2Summary<'a> {
    config: &'a ExperimentConfig,
    counts: Vec<(&'static str, [usize; 4])>,
    runs: &'a [RunSummary],
}

fn table2(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let study_cfg = StudyConfig {
        p: cfg.dim,
        s: cfg.shift,
        n_particles: cfg.particles,
        n_iters: cfg.iters,
        n_components: cfg.components,
        alpha0: cfg.defensive.unwrap_or(crate::experiments::DEFENSIVE_ALPHA0),
        perturbation: cfg.perturbation,
        master_seed: cfg.seed,
    };
    let study = run_table2_study(&study_cfg, cfg.runs, &StudyVariant::ALL)?;
    output::write_table2(BufWriter::new(File::create(cfg.out.join(output::TABLE_FILE))?), &study)?;
    output::write_iterations_file(
        &cfg.out,
        study
            .traces
            .iter()
            .flat_map(|(v, run, recs)| recs.iter().map(move |r| (v.name(), *run, r))),
    )?;
    let counts = StudyVariant::ALL
        .iter()
        .zip(&study.counts)
        .map(|(v, c)| (v.name(), *c))
        .collect();
    output::write_summary(
        &cfg.out,
        &Table2Summary {
            config: cfg,
            counts,
            runs: &study.runs,
        },
    )
}

#[derive(Serialize)]
struct PimaSummary<'a> {
    config: &'a ExperimentConfig,
    mle: &'a [f64],
    mle_sd: Vec<f64>,
    posterior_mean: &'a [f64],
    termination: Termination,
    final_diagnostics: Diagnostics,
    final_mixture: serde_json::Value,
}

fn pima(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let FamilySpec::T(nus) = &cfg.family else {
        bail!("the pima experiment uses a t mixture; pass --family t:<nu,...>");
    };
    let data = load_data(cfg)?;
    let outcome = run_pima(
        &data,
        &PimaConfig {
            n_particles: cfg.particles,
            n_iters: cfg.iters,
            nus: nus.clone(),
            variant: cfg.variant,
            perturbation: cfg.perturbation,
            stop_perplexity_delta: cfg.early_stop,
            seed: cfg.seed,
        },
    )?;
    output::write_iterations_file(&cfg.out, outcome.run.records.iter().map(|r| ("pima", 0, r)))?;
    output::write_components_file(&cfg.out, outcome.run.records.iter().map(|r| ("pima", 0, r)))?;
    let mut wtr = csv::Writer::from_path(cfg.out.join(TRACE_FILE))?;
    let mut header = vec!["iter".to_string()];
    header.extend((0..ProbitPosterior::<f64>::DIM).map(|k| format!("beta{k}")));
    wtr.write_record(&header)?;
    for (i, mean) in outcome.mean_trace.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(mean.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    output::write_summary(
        &cfg.out,
        &PimaSummary {
            config: cfg,
            mle: &outcome.mle,
            mle_sd: (0..outcome.mle.len()).map(|k| outcome.mle_cov.get(k, k).sqrt()).collect(),
            posterior_mean: &outcome.posterior_mean,
            termination: outcome.run.termination,
            final_diagnostics: perplexity(&outcome.run.sample),
            final_mixture: output::mixture_value(&outcome.run.mixture)?,
        },
    )
}

#[derive(Serialize)]
struct RunSummaryFile<'a> {
    config: &'a ExperimentConfig,
    termination: Termination,
    iterations: usize,
    final_diagnostics: Diagnostics,
    /// Self-normalised estimate of the target mean from the last sample.
    mean_estimate: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<OutcomeClass>,
    final_mixture: serde_json::Value,
}

/// Initial mixture for a custom run: copies of `start` for a Gaussian family,
/// one t component per degree of freedom (or `components` copies of a single
/// one) otherwise.
fn initial_mixture(
    cfg: &ExperimentConfig,
    start: &GaussianComponent<f64>,
    rng: &mut crate::experiments::Rng64,
) -> anyhow::Result<Mixture<f64>> {
    let m = match &cfg.family {
        FamilySpec::Gauss => perturbed_gaussian_mixture(start, cfg.components, cfg.perturbation, rng)?,
        FamilySpec::T(nus) => {
            let nus = match nus.len() {
                1 => vec![nus[0]; cfg.components],
                n if n == cfg.components => nus.clone(),
                n => bail!("family lists {n} degrees of freedom for {} components", cfg.components),
            };
            perturbed_t_mixture(&start.mu, &start.sigma, &nus, cfg.perturbation, rng)?
        }
    };
    Ok(match cfg.defensive {
        Some(a) => m.with_defensive(a, start.clone())?,
        None => m,
    })
}

fn custom(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let (target, start): (Box<dyn TargetDensity<f64>>, GaussianComponent<f64>) = match cfg.target {
        TargetKind::Toy => (Box::new(ToyTarget::new(cfg.dim, cfg.shift)?), toy_q0(cfg.dim)),
        TargetKind::Pima => {
            let posterior = ProbitPosterior::new(&load_data(cfg)?);
            let (mle, cov) = posterior.mle()?;
            (Box::new(posterior), GaussianComponent::new(mle, cov)?)
        }
    };
    let mut rng = rng_for(cfg.seed, 2, 0);
    let initial = initial_mixture(cfg, &start, &mut rng)?;
    let mut adapt_cfg = AdaptConfig::new(cfg.particles, cfg.iters, cfg.variant);
    adapt_cfg.defensive_alpha0 = cfg.defensive;
    adapt_cfg.stop_perplexity_delta = cfg.early_stop;
    let out = adapt::run(target.as_ref(), initial, &adapt_cfg, &mut rng)?;
    let tag = variant_name(cfg.variant);
    output::write_iterations_file(&cfg.out, out.records.iter().map(|r| (tag, 0, r)))?;
    output::write_components_file(&cfg.out, out.records.iter().map(|r| (tag, 0, r)))?;
    out.sample
        .write_csv(BufWriter::new(File::create(cfg.out.join(output::SAMPLE_FILE))?))?;
    let mean_estimate = (0..out.sample.dim())
        .map(|k| sn_estimate(&out.sample, |x| x[k]))
        .collect::<mpmc::Result<Vec<_>>>()?;
    let outcome = (cfg.target == TargetKind::Toy).then(|| classify_outcome(&out.records, &out.sample, cfg.shift));
    output::write_summary(
        &cfg.out,
        &RunSummaryFile {
            config: cfg,
            termination: out.termination,
            iterations: out.records.len(),
            final_diagnostics: perplexity(&out.sample),
            mean_estimate,
            outcome,
            final_mixture: output::mixture_value(&out.mixture)?,
        },
    )
}
