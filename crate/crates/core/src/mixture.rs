//! Mixture proposals over Gaussian or Student-t components, with an optional
//! frozen defensive component.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::density::{
    mahalanobis_sq_unchecked, mvn_log_from_maha, mvt_log_from_maha, logsumexp, sample_mvn,
    sample_mvt_unchecked,
};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::scalar::Real;

/// Weight below which a component is reported as vanished. Such components
/// are kept in the mixture.
pub const VANISHED_WEIGHT: f64 = 1e-6;

/// A single elliptical mixture component.
pub trait Component<T: Real>: Clone + Send + Sync {
    fn mu(&self) -> &[T];

    fn sigma(&self) -> &SpdMatrix<T>;

    fn dim(&self) -> usize {
        self.mu().len()
    }

    /// Log density at `x`; `x` must have the component's dimension.
    fn log_density(&self, x: &[T]) -> T;

    /// Draw `x`, with the latent chi-squared scale for t components.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Option<T>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    pub mu: Vec<T>,
    pub sigma: SpdMatrix<T>,
}

impl<T: Real> GaussianComponent<T> {
    pub fn new(mu: Vec<T>, sigma: SpdMatrix<T>) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: mu.len(),
            });
        }
        Ok(GaussianComponent { mu, sigma })
    }
}

impl<T: Real> Component<T> for GaussianComponent<T> {
    fn mu(&self) -> &[T] {
        &self.mu
    }

    fn sigma(&self) -> &SpdMatrix<T> {
        &self.sigma
    }

    fn log_density(&self, x: &[T]) -> T {
        mvn_log_from_maha(mahalanobis_sq_unchecked(x, &self.mu, &self.sigma), &self.sigma)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Option<T>) {
        (sample_mvn(&self.mu, &self.sigma, rng), None)
    }
}

/// Multivariate t component; `nu` never changes during adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTComponent<T> {
    pub nu: T,
    pub mu: Vec<T>,
    pub sigma: SpdMatrix<T>,
}

impl<T: Real> StudentTComponent<T> {
    pub fn new(nu: T, mu: Vec<T>, sigma: SpdMatrix<T>) -> Result<Self> {
        if !(nu > T::zero()) {
            return Err(Error::NonPositiveDof(nu.as_f64()));
        }
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: mu.len(),
            });
        }
        Ok(StudentTComponent { nu, mu, sigma })
    }
}

impl<T: Real> Component<T> for StudentTComponent<T> {
    fn mu(&self) -> &[T] {
        &self.mu
    }

    fn sigma(&self) -> &SpdMatrix<T> {
        &self.sigma
    }

    fn log_density(&self, x: &[T]) -> T {
        mvt_log_from_maha(mahalanobis_sq_unchecked(x, &self.mu, &self.sigma), self.nu, &self.sigma)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Option<T>) {
        let (x, y) = sample_mvt_unchecked(self.nu, &self.mu, &self.sigma, rng);
        (x, Some(y))
    }
}

/// Homogeneous component list.
#[derive(Debug, Clone, PartialEq)]
pub enum Components<T> {
    Gaussian(Vec<GaussianComponent<T>>),
    StudentT(Vec<StudentTComponent<T>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    StudentT,
}

impl<T: Real> Components<T> {
    pub fn len(&self) -> usize {
        match self {
            Components::Gaussian(c) => c.len(),
            Components::StudentT(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self) -> Family {
        match self {
            Components::Gaussian(_) => Family::Gaussian,
            Components::StudentT(_) => Family::StudentT,
        }
    }

    pub fn mu(&self, d: usize) -> &[T] {
        match self {
            Components::Gaussian(c) => &c[d].mu,
            Components::StudentT(c) => &c[d].mu,
        }
    }

    pub fn sigma(&self, d: usize) -> &SpdMatrix<T> {
        match self {
            Components::Gaussian(c) => &c[d].sigma,
            Components::StudentT(c) => &c[d].sigma,
        }
    }

    /// Degrees of freedom for t components, `None` for Gaussians.
    pub fn nu(&self, d: usize) -> Option<T> {
        match self {
            Components::Gaussian(_) => None,
            Components::StudentT(c) => Some(c[d].nu),
        }
    }

    fn log_density(&self, d: usize, x: &[T]) -> T {
        match self {
            Components::Gaussian(c) => c[d].log_density(x),
            Components::StudentT(c) => c[d].log_density(x),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> (Vec<T>, Option<T>) {
        match self {
            Components::Gaussian(c) => c[d].sample(rng),
            Components::StudentT(c) => c[d].sample(rng),
        }
    }
}

/// Frozen safety component `q0` carrying fixed weight `alpha0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Defensive<T> {
    pub alpha0: T,
    pub q0: GaussianComponent<T>,
}

/// Which slot produced a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Component(usize),
    Defensive,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Component(d) => write!(f, "{d}"),
            Label::Defensive => f.write_str("defensive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDraw<T> {
    pub x: Vec<T>,
    pub label: Label,
    /// Latent chi-squared variable, present exactly for t draws.
    pub scale: Option<T>,
}

/// `Σ α_d q_d`, or `(1 − α₀) Σ α_d q_d + α₀ q₀` with a defensive component.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    weights: Vec<T>,
    components: Components<T>,
    defensive: Option<Defensive<T>>,
}

fn weight_tolerance<T: Real>() -> T {
    T::of(1e-9).max(T::epsilon() * T::of(1e3))
}

impl<T: Real> Mixture<T> {
    /// Builds a mixture; weights must be nonnegative and sum to one (they
    /// are renormalised exactly).
    pub fn new(weights: Vec<T>, components: Components<T>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let dim = components.mu(0).len();
        for d in 0..components.len() {
            if components.mu(d).len() != dim || components.sigma(d).dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: components.mu(d).len(),
                });
            }
            if let Some(nu) = components.nu(d) {
                if !(nu > T::zero()) {
                    return Err(Error::NonPositiveDof(nu.as_f64()));
                }
            }
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidMixture("negative or non-finite weight".into()));
        }
        let total: T = weights.iter().copied().sum();
        if !((total - T::one()).abs() <= weight_tolerance()) {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Mixture {
            weights,
            components,
            defensive: None,
        })
    }

    /// Equal-weight mixture.
    pub fn uniform(components: Components<T>) -> Result<Self> {
        let d = components.len().max(1);
        Self::new(vec![T::one() / T::of(d as f64); components.len()], components)
    }

    pub fn with_defensive(mut self, alpha0: T, q0: GaussianComponent<T>) -> Result<Self> {
        if !(alpha0 > T::zero() && alpha0 < T::one()) {
            return Err(Error::InvalidMixture(format!("alpha0 = {alpha0} outside (0, 1)")));
        }
        if q0.mu.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q0.mu.len(),
            });
        }
        self.defensive = Some(Defensive { alpha0, q0 });
        Ok(self)
    }

    /// Same family and defensive slot, new adaptive weights and components.
    pub(crate) fn replace(&self, weights: Vec<T>, components: Components<T>) -> Self {
        Mixture {
            weights,
            components,
            defensive: self.defensive.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.mu(0).len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn components(&self) -> &Components<T> {
        &self.components
    }

    pub fn defensive(&self) -> Option<&Defensive<T>> {
        self.defensive.as_ref()
    }

    pub fn family(&self) -> Family {
        self.components.family()
    }

    /// Number of weight slots: `D`, or `D + 1` with a defensive component.
    pub fn n_slots(&self) -> usize {
        self.n_components() + usize::from(self.defensive.is_some())
    }

    /// Mixing weights as sampled, defensive slot last.
    pub fn effective_weights(&self) -> Vec<T> {
        match &self.defensive {
            None => self.weights.clone(),
            Some(def) => {
                let scale = T::one() - def.alpha0;
                let mut w: Vec<T> = self.weights.iter().map(|&a| a * scale).collect();
                w.push(def.alpha0);
                w
            }
        }
    }

    /// Indices of adaptive components with weight under [`VANISHED_WEIGHT`].
    pub fn vanished(&self) -> Vec<usize> {
        let floor = T::of(VANISHED_WEIGHT);
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < floor)
            .map(|(d, _)| d)
            .collect()
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `log(effective weight) + log q_slot(x)` for every slot.
    pub fn slot_log_terms(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        Ok(self.slot_log_terms_unchecked(x))
    }

    fn slot_log_terms_unchecked(&self, x: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_slots());
        let scale = self
            .defensive
            .as_ref()
            .map_or(T::zero(), |d| (T::one() - d.alpha0).ln());
        for (d, &w) in self.weights.iter().enumerate() {
            out.push(if w > T::zero() {
                w.ln() + scale + self.components.log_density(d, x)
            } else {
                T::neg_infinity()
            });
        }
        if let Some(def) = &self.defensive {
            out.push(def.alpha0.ln() + def.q0.log_density(x));
        }
        out
    }

    pub fn logpdf(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        logsumexp(&self.slot_log_terms_unchecked(x)).or(Ok(T::neg_infinity()))
    }

    /// Posterior slot probabilities `ρ(x)`; the defensive slot, when
    /// present, is last.
    pub fn component_posteriors(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        let terms = self.slot_log_terms_unchecked(x);
        let norm = logsumexp(&terms).map_err(|_| Error::ZeroProposalDensity)?;
        if !norm.is_finite() {
            return Err(Error::ZeroProposalDensity);
        }
        Ok(terms.into_iter().map(|t| (t - norm).exp()).collect())
    }

    /// Draws `n` points, keeping the slot each came from.
    pub fn sample_with_labels<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LabelledDraw<T>> {
        let eff: Vec<f64> = self.effective_weights().iter().map(|w| w.as_f64()).collect();
        let picker = WeightedIndex::new(&eff).expect("mixture weights validated on construction");
        let d = self.n_components();
        (0..n)
            .map(|_| {
                let slot = picker.sample(rng);
                if slot < d {
                    let (x, scale) = self.components.sample(slot, rng);
                    LabelledDraw {
                        x,
                        label: Label::Component(slot),
                        scale,
                    }
                } else {
                    let def = self.defensive.as_ref().expect("defensive slot");
                    LabelledDraw {
                        x: sample_mvn(&def.q0.mu, &def.q0.sigma, rng),
                        label: Label::Defensive,
                        scale: None,
                    }
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MixtureJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<MixtureJson>(s)?.try_into()
    }
}

/// On-disk layout of a mixture. Matrices are row-major; `nu` is present only
/// for the `student_t` family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureJson {
    pub family: Family,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defensive: Option<DefensiveJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentJson {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefensiveJson {
    pub alpha0: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl<T: Real> From<&Mixture<T>> for MixtureJson {
    fn from(m: &Mixture<T>) -> Self {
        let components = (0..m.n_components())
            .map(|d| ComponentJson {
                mu: to_f64(m.components.mu(d)),
                sigma: to_f64(m.components.sigma(d).entries()),
                nu: m.components.nu(d).map(|v| v.as_f64()),
            })
            .collect();
        MixtureJson {
            family: m.family(),
            dim: m.dim(),
            weights: to_f64(&m.weights),
            components,
            defensive: m.defensive.as_ref().map(|d| DefensiveJson {
                alpha0: d.alpha0.as_f64(),
                mu: to_f64(&d.q0.mu),
                sigma: to_f64(d.q0.sigma.entries()),
            }),
        }
    }
}

impl<T: Real> TryFrom<MixtureJson> for Mixture<T> {
    type Error = Error;

    fn try_from(j: MixtureJson) -> Result<Self> {
        let dim = j.dim;
        let components = match j.family {
            Family::Gaussian => Components::Gaussian(
                j.components
                    .iter()
                    .map(|c| GaussianComponent::new(from_f64(&c.mu), SpdMatrix::new(dim, from_f64(&c.sigma))?))
                    .collect::<Result<_>>()?,
            ),
            Family::StudentT => Components::StudentT(
                j.components
                    .iter()
                    .map(|c| {
                        let nu = c
                            .nu
                            .ok_or_else(|| Error::InvalidMixture("t component without nu".into()))?;
                        StudentTComponent::new(T::of(nu), from_f64(&c.mu), SpdMatrix::new(dim, from_f64(&c.sigma))?)
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let m = Mixture::new(from_f64(&j.weights), components)?;
        match j.defensive {
            None => Ok(m),
            Some(d) => {
                let q0 = GaussianComponent::new(from_f64(&d.mu), SpdMatrix::new(dim, from_f64(&d.sigma))?)?;
                m.with_defensive(T::of(d.alpha0), q0)
            }
        }
    }
}
