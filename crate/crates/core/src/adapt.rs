//! Mixture adaptation: responsibilities, the Gaussian and Student-t
//! parameter updates, and the iteration driver.
//!
//! One iteration draws `N` labelled particles from the current mixture,
//! weights them against the target, and refits every adaptive component by a
//! weighted M-step. The plain variant attributes each particle to the
//! component that generated it; the Rao-Blackwellised variant spreads it over
//! components according to the posterior slot probabilities. A defensive
//! component, when present, keeps its weight and parameters throughout.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::mahalanobis_sq_unchecked;
use crate::error::{Error, Result};
use crate::importance::{compute_weights, perplexity, Diagnostics, WeightedSample};
use crate::linalg::SpdMatrix;
use crate::mixture::{Components, GaussianComponent, Label, Mixture, StudentTComponent};
use crate::scalar::Real;
use crate::targets::TargetDensity;

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-12;
pub const DEFAULT_STOP_PERPLEXITY_DELTA: f64 = 1e-3;
/// Consecutive small perplexity changes required before stopping early.
pub const PLATEAU_LENGTH: usize = 3;
/// Initial mean jitter, in units of the marginal standard deviations of the
/// starting density.
pub const DEFAULT_PERTURBATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Component indicators taken from the sampled labels.
    Plain,
    /// Indicators replaced by their conditional expectations.
    RaoBlackwell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig<T> {
    pub n_particles: usize,
    pub n_iters: usize,
    pub variant: Variant,
    /// Must agree with the defensive slot of the mixture being adapted.
    pub defensive_alpha0: Option<T>,
    pub weight_floor: T,
    /// `None` disables the perplexity plateau stop.
    pub stop_perplexity_delta: Option<T>,
}

impl<T: Real> AdaptConfig<T> {
    pub fn new(n_particles: usize, n_iters: usize, variant: Variant) -> Self {
        AdaptConfig {
            n_particles,
            n_iters,
            variant,
            defensive_alpha0: None,
            weight_floor: T::of(DEFAULT_WEIGHT_FLOOR),
            stop_perplexity_delta: Some(T::of(DEFAULT_STOP_PERPLEXITY_DELTA)),
        }
    }

    pub fn defensive(mut self, alpha0: T) -> Self {
        self.defensive_alpha0 = Some(alpha0);
        self
    }

    pub fn without_early_stop(mut self) -> Self {
        self.stop_perplexity_delta = None;
        self
    }

    pub fn validate(&self, mixture: &Mixture<T>) -> Result<()> {
        if self.n_particles == 0 || self.n_iters == 0 {
            return Err(Error::InvalidConfig("need at least one particle and one iteration".into()));
        }
        if !(self.weight_floor > T::zero()) {
            return Err(Error::InvalidConfig("weight floor must be positive".into()));
        }
        match (self.defensive_alpha0, mixture.defensive()) {
            (None, None) => Ok(()),
            (Some(a), Some(d)) if a == d.alpha0 => Ok(()),
            (Some(a), _) if !(a > T::zero() && a < T::one()) => {
                Err(Error::InvalidConfig(format!("alpha0 = {a} outside (0, 1)")))
            }
            _ => Err(Error::InvalidConfig(
                "defensive_alpha0 does not match the mixture's defensive component".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "components")]
pub enum UpdateStatus {
    Ok,
    /// These components kept their previous parameters: their covariance
    /// update was not positive definite.
    ComponentDegenerate(Vec<usize>),
    /// No adaptive component received any weight; the mixture is unchanged.
    NumericalFailure,
}

impl UpdateStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, UpdateStatus::Ok)
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    pub iter: usize,
    /// Proposal the iteration sampled from.
    pub mixture_before: Mixture<T>,
    pub diagnostics: Diagnostics,
    pub update_status: UpdateStatus,
    /// Adaptive components whose weight after the update is below
    /// [`crate::mixture::VANISHED_WEIGHT`].
    pub vanished: Vec<usize>,
}

/// `N × D` indicator weights, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityWeights<T> {
    n: usize,
    d: usize,
    xi: Vec<T>,
}

impl<T: Real> ResponsibilityWeights<T> {
    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.xi[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, d: usize) -> T {
        self.xi[i * self.d + d]
    }
}

pub fn responsibilities<T: Real>(
    ws: &WeightedSample<T>,
    mixture: &Mixture<T>,
    variant: Variant,
) -> Result<ResponsibilityWeights<T>> {
    let d = mixture.n_components();
    let n = ws.len();
    let xi = match variant {
        Variant::Plain => {
            let mut xi = vec![T::zero(); n * d];
            for (i, draw) in ws.draws().iter().enumerate() {
                if let Label::Component(k) = draw.label {
                    if k >= d {
                        return Err(Error::InvalidMixture(format!("label {k} out of range")));
                    }
                    xi[i * d + k] = T::one();
                }
            }
            xi
        }
        Variant::RaoBlackwell => {
            let rows: Vec<Vec<T>> = ws
                .draws()
                .par_iter()
                .map(|draw| mixture.component_posteriors(&draw.x))
                .collect::<Result<_>>()?;
            rows.into_iter().flat_map(|mut r| {
                r.truncate(d);
                r
            })
            .collect()
        }
    };
    Ok(ResponsibilityWeights { n, d, xi })
}

/// New mixture together with the outcome of the update.
#[derive(Debug, Clone)]
pub struct Update<T> {
    pub mixture: Mixture<T>,
    pub status: UpdateStatus,
}

/// `(X − μ)ᵀ Σ⁻¹ (X − μ)`-based latent scale expectation for a t component,
/// `(ν + p) / (ν + maha)`.
pub fn t_scale_weight<T: Real>(component: &StudentTComponent<T>, x: &[T]) -> T {
    let p = T::of(x.len() as f64);
    let maha = mahalanobis_sq_unchecked(x, &component.mu, &component.sigma);
    (component.nu + p) / (component.nu + maha)
}

struct Moments<T> {
    mass: T,
    mu: Vec<T>,
    sigma: Result<SpdMatrix<T>>,
}

/// Weighted mean and scatter for one component. `scale[i]` multiplies the
/// particle weight in the mean and scatter, but not in the normaliser of the
/// scatter.
fn weighted_moments<T: Real>(ws: &WeightedSample<T>, resp: &ResponsibilityWeights<T>, d: usize, scale: Option<&[T]>) -> Moments<T> {
    let p = ws.dim();
    let w = ws.w_norm();
    let mut mass = T::zero();
    let mut scaled_mass = T::zero();
    let mut mu = vec![T::zero(); p];
    for (i, draw) in ws.draws().iter().enumerate() {
        let base = w[i] * resp.get(i, d);
        if base == T::zero() {
            continue;
        }
        let c = base * scale.map_or(T::one(), |s| s[i]);
        mass += base;
        scaled_mass += c;
        for (m, &x) in mu.iter_mut().zip(&draw.x) {
            *m += c * x;
        }
    }
    if !(scaled_mass > T::zero()) {
        return Moments {
            mass,
            mu,
            sigma: Err(Error::ZeroWeights),
        };
    }
    mu.iter_mut().for_each(|m| *m /= scaled_mass);
    let mut scatter = vec![T::zero(); p * p];
    let mut diff = vec![T::zero(); p];
    for (i, draw) in ws.draws().iter().enumerate() {
        let base = w[i] * resp.get(i, d);
        if base == T::zero() {
            continue;
        }
        let c = base * scale.map_or(T::one(), |s| s[i]);
        for k in 0..p {
            diff[k] = draw.x[k] - mu[k];
        }
        for a in 0..p {
            let ca = c * diff[a];
            for b in a..p {
                scatter[a * p + b] += ca * diff[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = scatter[a * p + b] / mass;
            scatter[a * p + b] = v;
            scatter[b * p + a] = v;
        }
    }
    Moments {
        mass,
        mu,
        sigma: SpdMatrix::new(p, scatter),
    }
}

fn check_shapes<T: Real>(ws: &WeightedSample<T>, mixture: &Mixture<T>, resp: &ResponsibilityWeights<T>) -> Result<()> {
    if resp.n != ws.len() {
        return Err(Error::DimensionMismatch {
            expected: ws.len(),
            found: resp.n,
        });
    }
    if resp.d != mixture.n_components() {
        return Err(Error::DimensionMismatch {
            expected: mixture.n_components(),
            found: resp.d,
        });
    }
    Ok(())
}

/// Shared weight bookkeeping: renormalises the adaptive masses and records
/// which components fell back to their previous parameters.
fn finish<T: Real>(
    mixture: &Mixture<T>,
    masses: Vec<T>,
    components: Components<T>,
    degenerate: Vec<usize>,
) -> Update<T> {
    let total: T = masses.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Update {
            mixture: mixture.clone(),
            status: UpdateStatus::NumericalFailure,
        };
    }
    let weights = masses.into_iter().map(|m| m / total).collect();
    let status = if degenerate.is_empty() {
        UpdateStatus::Ok
    } else {
        UpdateStatus::ComponentDegenerate(degenerate)
    };
    Update {
        mixture: mixture.replace(weights, components),
        status,
    }
}

/// Weighted M-step for a Gaussian mixture.
///
/// A component whose mass `Σ ω̄ᵢ ξᵢ_d` is below `weight_floor` keeps its
/// parameters and takes that mass as its new (vanishing) weight. A component
/// whose covariance update is not positive definite keeps its parameters and
/// is reported in [`UpdateStatus::ComponentDegenerate`].
pub fn gaussian_update<T: Real>(
    ws: &WeightedSample<T>,
    mixture: &Mixture<T>,
    resp: &ResponsibilityWeights<T>,
    weight_floor: T,
) -> Result<Update<T>> {
    check_shapes(ws, mixture, resp)?;
    let Components::Gaussian(old) = mixture.components() else {
        return Err(Error::InvalidMixture("gaussian update on a t mixture".into()));
    };
    let mut masses = Vec::with_capacity(old.len());
    let mut next = Vec::with_capacity(old.len());
    let mut degenerate = Vec::new();
    for (d, comp) in old.iter().enumerate() {
        let m = weighted_moments(ws, resp, d, None);
        masses.push(m.mass);
        match m.sigma {
            Ok(sigma) if m.mass >= weight_floor => next.push(GaussianComponent { mu: m.mu, sigma }),
            _ => {
                if m.mass >= weight_floor {
                    degenerate.push(d);
                }
                next.push(comp.clone());
            }
        }
    }
    Ok(finish(mixture, masses, Components::Gaussian(next), degenerate))
}

/// Weighted M-step for a Student-t mixture with fixed degrees of freedom.
/// The latent-scale weights use the parameters before the update.
pub fn student_t_update<T: Real>(
    ws: &WeightedSample<T>,
    mixture: &Mixture<T>,
    resp: &ResponsibilityWeights<T>,
    weight_floor: T,
) -> Result<Update<T>> {
    check_shapes(ws, mixture, resp)?;
    let Components::StudentT(old) = mixture.components() else {
        return Err(Error::InvalidMixture("student-t update on a gaussian mixture".into()));
    };
    let mut masses = Vec::with_capacity(old.len());
    let mut next = Vec::with_capacity(old.len());
    let mut degenerate = Vec::new();
    for (d, comp) in old.iter().enumerate() {
        let gamma: Vec<T> = ws.draws().par_iter().map(|draw| t_scale_weight(comp, &draw.x)).collect();
        let m = weighted_moments(ws, resp, d, Some(&gamma));
        masses.push(m.mass);
        match m.sigma {
            Ok(sigma) if m.mass >= weight_floor => next.push(StudentTComponent {
                nu: comp.nu,
                mu: m.mu,
                sigma,
            }),
            _ => {
                if m.mass >= weight_floor {
                    degenerate.push(d);
                }
                next.push(comp.clone());
            }
        }
    }
    Ok(finish(mixture, masses, Components::StudentT(next), degenerate))
}

/// Dispatches to the update matching the mixture family.
pub fn update<T: Real>(
    ws: &WeightedSample<T>,
    mixture: &Mixture<T>,
    resp: &ResponsibilityWeights<T>,
    weight_floor: T,
) -> Result<Update<T>> {
    match mixture.components() {
        Components::Gaussian(_) => gaussian_update(ws, mixture, resp, weight_floor),
        Components::StudentT(_) => student_t_update(ws, mixture, resp, weight_floor),
    }
}

#[derive(Debug, Clone)]
pub struct Step<T> {
    pub mixture: Mixture<T>,
    pub sample: WeightedSample<T>,
    pub record: IterationRecord<T>,
}

/// One sample / weight / update cycle. Update failures are reported in the
/// record's status; the returned sample is valid either way.
pub fn mpmc_iterate<T, G, R>(target: &G, mixture: &Mixture<T>, config: &AdaptConfig<T>, iter: usize, rng: &mut R) -> Result<Step<T>>
where
    T: Real,
    G: TargetDensity<T> + ?Sized,
    R: Rng + ?Sized,
{
    config.validate(mixture)?;
    let draws = mixture.sample_with_labels(config.n_particles, rng);
    let sample = compute_weights(target, mixture, draws)?;
    let diagnostics = perplexity(&sample);
    let outcome = responsibilities(&sample, mixture, config.variant)
        .and_then(|resp| update(&sample, mixture, &resp, config.weight_floor));
    let (next, status) = match outcome {
        Ok(u) => (u.mixture, u.status),
        Err(Error::ZeroProposalDensity) => (mixture.clone(), UpdateStatus::NumericalFailure),
        Err(e) => return Err(e),
    };
    let record = IterationRecord {
        iter,
        mixture_before: mixture.clone(),
        diagnostics,
        update_status: status,
        vanished: next.vanished(),
    };
    Ok(Step {
        mixture: next,
        sample,
        record,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// All `n_iters` iterations ran.
    Completed,
    /// The perplexity plateau rule fired.
    Converged,
    /// Every adaptive component failed to update in the last iteration.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub mixture: Mixture<T>,
    /// Sample of the last completed iteration.
    pub sample: WeightedSample<T>,
    pub records: Vec<IterationRecord<T>>,
    pub termination: Termination,
}

impl<T> RunOutput<T> {
    /// Whether any iteration reported a failed update.
    pub fn had_failure(&self) -> bool {
        self.termination == Termination::Aborted || self.records.iter().any(|r| !r.update_status.is_ok())
    }
}

/// Iterates [`mpmc_iterate`] up to `n_iters` times.
pub fn run<T, G, R>(target: &G, initial: Mixture<T>, config: &AdaptConfig<T>, rng: &mut R) -> Result<RunOutput<T>>
where
    T: Real,
    G: TargetDensity<T> + ?Sized,
    R: Rng + ?Sized,
{
    run_observed(target, initial, config, rng, |_| {})
}

/// [`run`], calling `observe` on every completed step.
pub fn run_observed<T, G, R, F>(
    target: &G,
    initial: Mixture<T>,
    config: &AdaptConfig<T>,
    rng: &mut R,
    mut observe: F,
) -> Result<RunOutput<T>>
where
    T: Real,
    G: TargetDensity<T> + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&Step<T>),
{
    config.validate(&initial)?;
    let mut mixture = initial;
    let mut records = Vec::with_capacity(config.n_iters);
    let mut sample = None;
    let mut plateau = 0;
    let mut termination = Termination::Completed;
    for iter in 0..config.n_iters {
        let step = mpmc_iterate(target, &mixture, config, iter, rng)?;
        let perp = step.record.diagnostics.norm_perplexity;
        let all_failed = match &step.record.update_status {
            UpdateStatus::NumericalFailure => true,
            UpdateStatus::ComponentDegenerate(ds) => {
                let live = mixture.weights().iter().filter(|&&w| w >= config.weight_floor).count();
                ds.len() >= live
            }
            UpdateStatus::Ok => false,
        };
        if let (Some(delta), Some(prev)) = (config.stop_perplexity_delta, records.last()) {
            let prev: &IterationRecord<T> = prev;
            if (perp - prev.diagnostics.norm_perplexity).abs() < delta.as_f64() {
                plateau += 1;
            } else {
                plateau = 0;
            }
        }
        observe(&step);
        mixture = step.mixture;
        sample = Some(step.sample);
        records.push(step.record);
        if all_failed {
            termination = Termination::Aborted;
            break;
        }
        if plateau >= PLATEAU_LENGTH {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(RunOutput {
        mixture,
        sample: sample.expect("at least one iteration"),
        records,
        termination,
    })
}

/// `d` equal-weight Gaussian copies of `start` with jittered means.
pub fn perturbed_gaussian_mixture<T: Real, R: Rng + ?Sized>(
    start: &GaussianComponent<T>,
    d: usize,
    perturbation: T,
    rng: &mut R,
) -> Result<Mixture<T>> {
    let comps = (0..d)
        .map(|_| GaussianComponent {
            mu: jitter(&start.mu, &start.sigma, perturbation, rng),
            sigma: start.sigma.clone(),
        })
        .collect();
    Mixture::uniform(Components::Gaussian(comps))
}

/// Equal-weight t mixture, one component per entry of `nus`, all sharing
/// `sigma` and jittered around `center`.
pub fn perturbed_t_mixture<T: Real, R: Rng + ?Sized>(
    center: &[T],
    sigma: &SpdMatrix<T>,
    nus: &[T],
    perturbation: T,
    rng: &mut R,
) -> Result<Mixture<T>> {
    let comps = nus
        .iter()
        .map(|&nu| StudentTComponent::new(nu, jitter(center, sigma, perturbation, rng), sigma.clone()))
        .collect::<Result<_>>()?;
    Mixture::uniform(Components::StudentT(comps))
}

fn jitter<T: Real, R: Rng + ?Sized>(mu: &[T], sigma: &SpdMatrix<T>, scale: T, rng: &mut R) -> Vec<T> {
    mu.iter()
        .enumerate()
        .map(|(k, &m)| m + scale * sigma.get(k, k).sqrt() * T::std_normal(rng))
        .collect()
}
