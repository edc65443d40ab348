//! The toy-target proposal evaluation, the four-variant robustness study and
//! the Pima probit run.

use mpmc::adapt::{self, Step};
use mpmc::{
    asymptotic_variance_estimate, compute_weights, perplexity, sn_estimate, AdaptConfig, Components, GaussianComponent,
    IterationRecord, Mixture, ProbitDataset, ProbitPosterior, RunOutput, SpdMatrix, TargetDensity, ToyTarget, Variant,
    WeightedSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type Rng64 = ChaCha8Rng;

/// Derives an independent seed for `(stream, index)` from a master seed.
pub fn sub_seed(master: u64, stream: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(stream.wrapping_mul(0x1_0000_0001) ^ splitmix(index)))
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng64 {
    Rng64::seed_from_u64(sub_seed(master, stream, index))
}

/// Variance of the initial isotropic proposal for the toy study.
pub const TOY_Q0_VARIANCE: f64 = 5.0;
pub const TOY_DIM: usize = 10;
pub const TOY_SHIFT: f64 = 2.0;
pub const DEFENSIVE_ALPHA0: f64 = 0.1;

pub fn toy_q0(p: usize) -> GaussianComponent<f64> {
    GaussianComponent::new(vec![0.0; p], SpdMatrix::scaled_identity(p, TOY_Q0_VARIANCE)).expect("valid q0")
}

/// The three quality figures of a proposal for `h(x) = x₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalQuality {
    pub norm_perplexity: f64,
    pub norm_ess: f64,
    pub var_x1: f64,
}

/// One-shot importance sampling with `n` draws from `mixture`.
pub fn evaluate_proposal<G, R>(target: &G, mixture: &Mixture<f64>, n: usize, rng: &mut R) -> mpmc::Result<ProposalQuality>
where
    G: TargetDensity<f64> + ?Sized,
    R: Rng + ?Sized,
{
    let draws = mixture.sample_with_labels(n, rng);
    let ws = compute_weights(target, mixture, draws)?;
    let d = perplexity(&ws);
    Ok(ProposalQuality {
        norm_perplexity: d.norm_perplexity,
        norm_ess: d.norm_ess,
        var_x1: asymptotic_variance_estimate(&ws, |x| x[0])?,
    })
}

/// Draws per iteration and iteration count used to fit the defensive rows.
pub const DEFENSIVE_FIT_PARTICLES: usize = 100_000;
pub const DEFENSIVE_FIT_ITERS: usize = 10;

/// Entropy-criterion fit of the adaptive part of a defensive mixture,
/// obtained by Rao-Blackwellised adaptation from `start`.
pub fn fit_defensive<R: Rng + ?Sized>(
    target: &ToyTarget<f64>,
    start: Mixture<f64>,
    n: usize,
    iters: usize,
    rng: &mut R,
) -> mpmc::Result<Mixture<f64>> {
    let alpha0 = start.defensive().map(|d| d.alpha0).unwrap_or(DEFENSIVE_ALPHA0);
    let config = AdaptConfig::new(n, iters, Variant::RaoBlackwell)
        .defensive(alpha0)
        .without_early_stop();
    Ok(adapt::run(target, start, &config, rng)?.mixture)
}

/// Reference proposals for the toy target, in table order. The defensive
/// rows are the plug-in starting points; see [`fit_defensive`].
pub fn table1_proposals(target: &ToyTarget<f64>) -> Vec<(&'static str, Mixture<f64>)> {
    let p = target.p;
    let q0 = toy_q0(p);
    let single = |c: GaussianComponent<f64>| Mixture::new(vec![1.0], Components::Gaussian(vec![c])).expect("valid");
    let best = GaussianComponent::new(vec![0.0; p], target.covariance()).expect("valid");
    let modes = Mixture::uniform(Components::Gaussian(vec![
        GaussianComponent::new(vec![-target.s; p], SpdMatrix::identity(p)).expect("valid"),
        GaussianComponent::new(vec![target.s; p], SpdMatrix::identity(p)).expect("valid"),
    ]))
    .expect("valid");
    vec![
        ("q0", single(q0.clone())),
        ("best_gaussian", single(best.clone())),
        ("target_mixture", modes.clone()),
        (
            "best_gaussian_defensive",
            single(best).with_defensive(DEFENSIVE_ALPHA0, q0.clone()).expect("valid"),
        ),
        ("two_gaussian_defensive", modes.with_defensive(DEFENSIVE_ALPHA0, q0).expect("valid")),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub proposal: String,
    pub per_seed: Vec<ProposalQuality>,
    pub mean: ProposalQuality,
}

fn mean_quality(qs: &[ProposalQuality]) -> ProposalQuality {
    let n = qs.len() as f64;
    ProposalQuality {
        norm_perplexity: qs.iter().map(|q| q.norm_perplexity).sum::<f64>() / n,
        norm_ess: qs.iter().map(|q| q.norm_ess).sum::<f64>() / n,
        var_x1: qs.iter().map(|q| q.var_x1).sum::<f64>() / n,
    }
}

/// Evaluates every reference proposal with `n` draws under `seeds` seeds.
pub fn run_table1(p: usize, s: f64, n: usize, seeds: usize, master_seed: u64) -> mpmc::Result<Vec<Table1Row>> {
    let target = ToyTarget::new(p, s)?;
    table1_proposals(&target)
        .into_iter()
        .enumerate()
        .map(|(k, (name, mixture))| {
            let mixture = if mixture.defensive().is_some() {
                let mut rng = rng_for(master_seed, 100 + k as u64, 0);
                fit_defensive(&target, mixture, DEFENSIVE_FIT_PARTICLES, DEFENSIVE_FIT_ITERS, &mut rng)?
            } else {
                mixture
            };
            let per_seed = (0..seeds)
                .map(|i| evaluate_proposal(&target, &mixture, n, &mut rng_for(master_seed, k as u64, i as u64)))
                .collect::<mpmc::Result<Vec<_>>>()?;
            Ok(Table1Row {
                proposal: name.to_string(),
                mean: mean_quality(&per_seed),
                per_seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeLabel {
    Disastrous,
    Mediocre,
    Good,
    Excellent,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] = [
        OutcomeLabel::Disastrous,
        OutcomeLabel::Mediocre,
        OutcomeLabel::Good,
        OutcomeLabel::Excellent,
    ];

    pub fn short(self) -> &'static str {
        match self {
            OutcomeLabel::Disastrous => "D",
            OutcomeLabel::Mediocre => "M",
            OutcomeLabel::Good => "G",
            OutcomeLabel::Excellent => "E",
        }
    }
}

/// Mean bias (as a fraction of the mode offset `s`) beyond which a run is
/// treated as having locked onto a single mode.
pub const BIAS_FRACTION: f64 = 0.5;
pub const MEDIOCRE_BELOW: f64 = 0.05;
pub const EXCELLENT_ABOVE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEvidence {
    pub final_perplexity: f64,
    /// `|Σ ω̄ᵢ Xᵢ₁ − 0|`.
    pub mean_error: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeClass {
    pub label: OutcomeLabel,
    pub evidence: OutcomeEvidence,
}

/// Classification from evidence alone.
pub fn classify_evidence(evidence: OutcomeEvidence, s: f64) -> OutcomeClass {
    let label = if evidence.failed || !(evidence.mean_error <= BIAS_FRACTION * s) {
        OutcomeLabel::Disastrous
    } else if evidence.final_perplexity < MEDIOCRE_BELOW {
        OutcomeLabel::Mediocre
    } else if evidence.final_perplexity > EXCELLENT_ABOVE {
        OutcomeLabel::Excellent
    } else {
        OutcomeLabel::Good
    };
    OutcomeClass { label, evidence }
}

/// Classifies a toy-target run whose true mean is zero.
pub fn classify_outcome(records: &[IterationRecord<f64>], final_sample: &WeightedSample<f64>, s: f64) -> OutcomeClass {
    let failed = records.iter().any(|r| !r.update_status.is_ok());
    let mean_error = sn_estimate(final_sample, |x| x[0]).map_or(f64::INFINITY, f64::abs);
    classify_evidence(
        OutcomeEvidence {
            final_perplexity: perplexity(final_sample).norm_perplexity,
            mean_error,
            failed,
        },
        s,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyVariant {
    Plain,
    Defensive,
    RaoBlackwell,
    DefensiveRaoBlackwell,
}

impl StudyVariant {
    pub const ALL: [StudyVariant; 4] = [
        StudyVariant::Plain,
        StudyVariant::Defensive,
        StudyVariant::RaoBlackwell,
        StudyVariant::DefensiveRaoBlackwell,
    ];

    pub fn update(self) -> Variant {
        match self {
            StudyVariant::Plain | StudyVariant::Defensive => Variant::Plain,
            _ => Variant::RaoBlackwell,
        }
    }

    pub fn defensive(self) -> bool {
        matches!(self, StudyVariant::Defensive | StudyVariant::DefensiveRaoBlackwell)
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyVariant::Plain => "plain",
            StudyVariant::Defensive => "defensive",
            StudyVariant::RaoBlackwell => "rb",
            StudyVariant::DefensiveRaoBlackwell => "defensive_rb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub p: usize,
    pub s: f64,
    pub n_particles: usize,
    pub n_iters: usize,
    pub n_components: usize,
    pub alpha0: f64,
    pub perturbation: f64,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            p: TOY_DIM,
            s: TOY_SHIFT,
            n_particles: 5_000,
            n_iters: 20,
            n_components: 3,
            alpha0: DEFENSIVE_ALPHA0,
            perturbation: adapt::DEFAULT_PERTURBATION,
            master_seed: 0,
        }
    }
}

/// One adaptation run on the toy target, from the jittered `q0` start.
/// Initialisation and sampling use the same stream for every variant with
/// the same `run` index.
pub fn toy_run(config: &StudyConfig, variant: StudyVariant, run: usize) -> mpmc::Result<RunOutput<f64>> {
    let target = ToyTarget::new(config.p, config.s)?;
    let mut rng = rng_for(config.master_seed, 0, run as u64);
    let q0 = toy_q0(config.p);
    let mut initial = adapt::perturbed_gaussian_mixture(&q0, config.n_components, config.perturbation, &mut rng)?;
    let mut adapt_config = AdaptConfig::new(config.n_particles, config.n_iters, variant.update()).without_early_stop();
    if variant.defensive() {
        initial = initial.with_defensive(config.alpha0, q0)?;
        adapt_config = adapt_config.defensive(config.alpha0);
    }
    adapt::run(&target, initial, &adapt_config, &mut rng)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: StudyVariant,
    pub run: usize,
    pub outcome: OutcomeClass,
    pub iterations: usize,
    pub final_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub n_runs: usize,
    /// `counts[v][k]`: runs of `StudyVariant::ALL[v]` labelled `OutcomeLabel::ALL[k]`.
    pub counts: Vec<[usize; 4]>,
    pub runs: Vec<RunSummary>,
    #[serde(skip)]
    pub traces: Vec<(StudyVariant, usize, Vec<IterationRecord<f64>>)>,
}

impl StudyResult {
    pub fn count(&self, variant: StudyVariant, label: OutcomeLabel) -> usize {
        let v = StudyVariant::ALL.iter().position(|&x| x == variant).expect("known variant");
        let k = OutcomeLabel::ALL.iter().position(|&x| x == label).expect("known label");
        self.counts[v][k]
    }
}

/// `n_runs` independent runs for each of `variants`, classified.
pub fn run_table2_study(config: &StudyConfig, n_runs: usize, variants: &[StudyVariant]) -> mpmc::Result<StudyResult> {
    let jobs: Vec<(StudyVariant, usize)> = variants.iter().flat_map(|&v| (0..n_runs).map(move |r| (v, r))).collect();
    let outputs = jobs
        .par_iter()
        .map(|&(variant, run)| {
            let out = toy_run(config, variant, run)?;
            let outcome = classify_outcome(&out.records, &out.sample, config.s);
            let summary = RunSummary {
                variant,
                run,
                outcome,
                iterations: out.records.len(),
                final_weights: out.mixture.weights().to_vec(),
            };
            Ok((summary, out.records))
        })
        .collect::<mpmc::Result<Vec<_>>>()?;
    let mut counts = vec![[0usize; 4]; StudyVariant::ALL.len()];
    let mut runs = Vec::with_capacity(outputs.len());
    let mut traces = Vec::with_capacity(outputs.len());
    for (summary, records) in outputs {
        let v = StudyVariant::ALL.iter().position(|&x| x == summary.variant).expect("known variant");
        let k = OutcomeLabel::ALL
            .iter()
            .position(|&x| x == summary.outcome.label)
            .expect("known label");
        counts[v][k] += 1;
        traces.push((summary.variant, summary.run, records));
        runs.push(summary);
    }
    Ok(StudyResult {
        config: config.clone(),
        n_runs,
        counts,
        runs,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimaConfig {
    pub n_particles: usize,
    pub n_iters: usize,
    pub nus: Vec<f64>,
    pub variant: Variant,
    pub perturbation: f64,
    pub stop_perplexity_delta: Option<f64>,
    pub seed: u64,
}

impl Default for PimaConfig {
    fn default() -> Self {
        PimaConfig {
            n_particles: 10_000,
            n_iters: 50,
            nus: vec![3.0, 6.0, 9.0, 18.0],
            variant: Variant::RaoBlackwell,
            perturbation: adapt::DEFAULT_PERTURBATION,
            stop_perplexity_delta: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PimaOutcome {
    pub mle: Vec<f64>,
    pub mle_cov: SpdMatrix<f64>,
    pub run: RunOutput<f64>,
    /// Self-normalised posterior mean from each iteration's sample.
    pub mean_trace: Vec<Vec<f64>>,
    pub posterior_mean: Vec<f64>,
}

/// Adapts a t mixture started around the probit MLE, every component using
/// the MLE covariance as its scale matrix.
pub fn run_pima(data: &ProbitDataset, config: &PimaConfig) -> mpmc::Result<PimaOutcome> {
    let target = ProbitPosterior::<f64>::new(data);
    let (mle, mle_cov) = target.mle()?;
    let mut rng = rng_for(config.seed, 1, 0);
    let initial = adapt::perturbed_t_mixture(&mle, &mle_cov, &config.nus, config.perturbation, &mut rng)?;
    let mut adapt_config = AdaptConfig::new(config.n_particles, config.n_iters, config.variant);
    adapt_config.stop_perplexity_delta = config.stop_perplexity_delta;
    let mut mean_trace = Vec::new();
    let run = adapt::run_observed(&target, initial, &adapt_config, &mut rng, |step: &Step<f64>| {
        mean_trace.push(posterior_mean(&step.sample));
    })?;
    let posterior_mean = posterior_mean(&run.sample);
    Ok(PimaOutcome {
        mle,
        mle_cov,
        run,
        mean_trace,
        posterior_mean,
    })
}

fn posterior_mean(ws: &WeightedSample<f64>) -> Vec<f64> {
    (0..ws.dim())
        .map(|k| sn_estimate(ws, |x| x[k]).expect("finite draws"))
        .collect()
}
