//! Adaptive importance sampling with mixture proposals.
//!
//! A mixture of Gaussian or multivariate-t components is refitted, iteration
//! after iteration, to minimise the Kullback-Leibler divergence from the
//! target to the proposal. Each step draws a weighted sample, then applies a
//! weighted EM update using either the sampled component labels (plain) or
//! their conditional expectations (Rao-Blackwellised). An optional frozen
//! defensive component bounds the importance ratios.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below cover the common case.
//!
//! ```
//! use mpmc::{adapt, AdaptConfig, GaussianComponent, SpdMatrix, ToyTarget, Variant};
//! use rand::SeedableRng;
//!
//! let target = ToyTarget::new(2, 1.5).unwrap();
//! let start = GaussianComponent::new(vec![0.0, 0.0], SpdMatrix::scaled_identity(2, 5.0)).unwrap();
//! let mut rng = rand::rngs::StdRng::seed_from_u64(7);
//! let initial = adapt::perturbed_gaussian_mixture(&start, 2, 0.1, &mut rng).unwrap();
//! let config = AdaptConfig::new(2_000, 10, Variant::RaoBlackwell);
//! let out = adapt::run(&target, initial, &config, &mut rng).unwrap();
//! let last = out.records.last().unwrap();
//! assert!(last.diagnostics.norm_perplexity > 0.1);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod density;
pub mod error;
pub mod importance;
pub mod linalg;
pub mod mixture;
pub mod scalar;
pub mod targets;

pub use adapt::{
    mpmc_iterate, responsibilities, run, AdaptConfig, IterationRecord, ResponsibilityWeights, RunOutput,
    Termination, UpdateStatus, Variant,
};
pub use density::{gaussian_kl, logsumexp, mahalanobis_sq, mvn_logpdf, mvt_logpdf, sample_mvn, sample_mvt};
pub use error::{Error, Result};
pub use importance::{
    asymptotic_variance_estimate, compute_weights, divergence_estimate, perplexity, sn_estimate, Diagnostics,
    DivergenceEstimate, WeightedSample,
};
pub use linalg::{chol_factor, SpdMatrix};
pub use mixture::{
    Component, Components, Defensive, Family, GaussianComponent, Label, LabelledDraw, Mixture, StudentTComponent,
};
pub use scalar::Real;
pub use targets::{
    load_pima_csv, std_normal_logcdf, ProbitDataset, ProbitPosterior, TargetDensity, ToyTarget,
};

pub type SpdMatrix64 = SpdMatrix<f64>;
pub type Mixture64 = Mixture<f64>;
pub type WeightedSample64 = WeightedSample<f64>;
pub type AdaptConfig64 = AdaptConfig<f64>;
pub type RunOutput64 = RunOutput<f64>;
pub type ToyTarget64 = ToyTarget<f64>;
pub type ProbitPosterior64 = ProbitPosterior<f64>;

pub type Mixture32 = Mixture<f32>;
pub type WeightedSample32 = WeightedSample<f32>;
