mod support;

use mpmc::adapt::{gaussian_update, responsibilities, t_scale_weight, UpdateStatus};
use mpmc::{
    asymptotic_variance_estimate, compute_weights, divergence_estimate, gaussian_kl, logsumexp, mvn_logpdf,
    perplexity, std_normal_logcdf, Components, GaussianComponent, Label, LabelledDraw, Mixture, ProbitDataset,
    ProbitPosterior, SpdMatrix, StudentTComponent, TargetDensity, ToyTarget, Variant, WeightedSample,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use support::checks;

fn run(check: checks::Check) {
    if let Err(msg) = check() {
        panic!("{msg}");
    }
}

#[test]
fn weight_normalisation() {
    run(checks::weight_normalisation);
}

#[test]
fn perplexity_ess_bounds() {
    run(checks::perplexity_ess_bounds);
}

#[test]
fn divergence_identity() {
    run(checks::divergence_identity);
}

#[test]
fn scale_invariance() {
    run(checks::scale_invariance);
}

#[test]
fn responsibility_rows() {
    run(checks::responsibility_rows);
}

#[test]
fn rao_blackwell_expectation() {
    run(checks::rao_blackwell_expectation);
}

#[test]
fn gaussian_stationarity() {
    run(checks::gaussian_stationarity);
}

#[test]
fn t_scale_posterior() {
    run(checks::t_scale_posterior);
}

#[test]
fn defensive_bound() {
    run(checks::defensive_bound);
}

#[test]
fn t_gaussian_limit() {
    run(checks::t_gaussian_limit);
}

#[test]
fn check_registry_is_complete() {
    assert_eq!(checks::ALL.len(), 10);
    for (name, check) in checks::ALL {
        assert!(!name.is_empty());
        let _ = check;
    }
}

fn spd(p: usize) -> impl Strategy<Value = SpdMatrix<f64>> {
    // A Aᵀ + 0.5 I is comfortably positive definite.
    prop::collection::vec(-1.0f64..1.0, p * p).prop_map(move |a| {
        let mut m = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                m[i * p + j] = (0..p).map(|k| a[i * p + k] * a[j * p + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        SpdMatrix::new(p, m).unwrap()
    })
}

fn gaussian(p: usize) -> impl Strategy<Value = GaussianComponent<f64>> {
    (prop::collection::vec(-3.0f64..3.0, p), spd(p)).prop_map(|(mu, s)| GaussianComponent::new(mu, s).unwrap())
}

fn mixture_case() -> impl Strategy<Value = (Mixture<f64>, Option<f64>, Vec<f64>)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(p, d)| {
        (
            prop::collection::vec(gaussian(p), d),
            prop::collection::vec(0.05f64..1.0, d),
            prop::option::of((0.01f64..0.5, gaussian(p))),
            prop::collection::vec(-4.0f64..4.0, p),
        )
            .prop_map(|(comps, w, def, x)| {
                let total: f64 = w.iter().sum();
                let w = w.into_iter().map(|v| v / total).collect();
                let m = Mixture::new(w, Components::Gaussian(comps)).unwrap();
                match def {
                    Some((a, q0)) => (m.with_defensive(a, q0).unwrap(), Some(a), x),
                    None => (m, None, x),
                }
            })
    })
}

fn weighted_sample(log_w: &[f64]) -> WeightedSample<f64> {
    let draws = log_w
        .iter()
        .enumerate()
        .map(|(i, _)| LabelledDraw { x: vec![i as f64], label: Label::Component(0), scale: None })
        .collect();
    WeightedSample::from_log_densities(draws, log_w.to_vec(), vec![0.0; log_w.len()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mixture_density_is_direct_sum((m, _, x) in mixture_case()) {
        let eff = m.effective_weights();
        let comps = m.components();
        let mut direct: f64 = (0..m.n_components())
            .map(|d| eff[d] * mvn_logpdf(&x, comps.mu(d), comps.sigma(d)).unwrap().exp())
            .sum();
        if let Some(def) = m.defensive() {
            direct += eff[m.n_components()] * mvn_logpdf(&x, &def.q0.mu, &def.q0.sigma).unwrap().exp();
        }
        let got = m.logpdf(&x).unwrap().exp();
        prop_assert!((got - direct).abs() <= 1e-10 * direct, "{got} vs {direct}");
    }

    #[test]
    fn posteriors_are_probabilities((m, _, x) in mixture_case()) {
        let rho = m.component_posteriors(&x).unwrap();
        prop_assert_eq!(rho.len(), m.n_slots());
        prop_assert!(rho.iter().all(|&r| r >= 0.0));
        prop_assert!((rho.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn defensive_density_floor((m, alpha0, x) in mixture_case()) {
        if let (Some(a), Some(def)) = (alpha0, m.defensive()) {
            let floor = a.ln() + mvn_logpdf(&x, &def.q0.mu, &def.q0.sigma).unwrap();
            prop_assert!(m.logpdf(&x).unwrap() >= floor - 1e-12);
        }
    }

    #[test]
    fn logsumexp_bounds(v in prop::collection::vec(-700.0f64..700.0, 1..50)) {
        let l = logsumexp(&v).unwrap();
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(l >= max - 1e-12);
        prop_assert!(l <= max + (v.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn normalisation_and_bounds(log_w in prop::collection::vec(-300.0f64..300.0, 1..200)) {
        let ws = weighted_sample(&log_w);
        let n = log_w.len() as f64;
        prop_assert!((ws.w_norm().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let d = perplexity(&ws);
        prop_assert!(d.norm_perplexity >= 1.0 / n - 1e-12 && d.norm_perplexity <= 1.0 + 1e-12);
        prop_assert!(d.norm_ess >= 1.0 / n - 1e-12 && d.norm_ess <= 1.0 + 1e-12);
        prop_assert!((divergence_estimate(&ws).perplexity() - d.norm_perplexity).abs() <= 1e-10);
    }

    #[test]
    fn scale_shift_leaves_weights(log_w in prop::collection::vec(-50.0f64..50.0, 2..100), shift in -69.0f64..69.0) {
        let a = weighted_sample(&log_w);
        let shifted: Vec<f64> = log_w.iter().map(|l| l + shift).collect();
        let b = weighted_sample(&shifted);
        for (x, y) in a.w_norm().iter().zip(b.w_norm()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        prop_assert!((perplexity(&a).norm_perplexity - perplexity(&b).norm_perplexity).abs() <= 1e-10);
    }

    #[test]
    fn t_scale_weight_range(p in 1usize..4, nu in 0.5f64..50.0, r1 in 0.0f64..5.0, r2 in 0.0f64..5.0) {
        let c = StudentTComponent::new(nu, vec![0.0; p], SpdMatrix::identity(p)).unwrap();
        let point = |r: f64| { let mut x = vec![0.0; p]; x[0] = r; x };
        let (g1, g2) = (t_scale_weight(&c, &point(r1)), t_scale_weight(&c, &point(r2)));
        let top = (nu + p as f64) / nu;
        prop_assert!(g1 > 0.0 && g1 <= top + 1e-12);
        if r1 < r2 { prop_assert!(g1 >= g2); }
    }

    #[test]
    fn mahalanobis_nonnegative(c in gaussian(3), x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let m = mpmc::mahalanobis_sq(&x, &c.mu, &c.sigma).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert!(mpmc::mahalanobis_sq(&c.mu, &c.mu, &c.sigma).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn kl_nonnegative(a in gaussian(2), b in gaussian(2)) {
        prop_assert!(gaussian_kl(&a.mu, &a.sigma, &b.mu, &b.sigma).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&a.mu, &a.sigma, &a.mu, &a.sigma).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn logcdf_reflection(u in -40.0f64..40.0) {
        let s = std_normal_logcdf(u) + std_normal_logcdf(-u);
        prop_assert!(s <= 2.0 * 0.5f64.ln() + 1e-12);
    }

    #[test]
    fn update_conserves_weight(seed in 0u64..1000, defensive in any::<bool>(), rb in any::<bool>()) {
        let target = ToyTarget::new(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = GaussianComponent::new(vec![0.0, 0.0], SpdMatrix::scaled_identity(2, 3.0)).unwrap();
        let mut m = mpmc::adapt::perturbed_gaussian_mixture(&start, 3, 0.3, &mut rng).unwrap();
        if defensive {
            m = m.with_defensive(0.1, start).unwrap();
        }
        let ws = compute_weights(&target, &m, m.sample_with_labels(300, &mut rng)).unwrap();
        let variant = if rb { Variant::RaoBlackwell } else { Variant::Plain };
        let resp = responsibilities(&ws, &m, variant).unwrap();
        let up = gaussian_update(&ws, &m, &resp, 1e-12).unwrap();
        let w = up.mixture.weights();
        prop_assert!(w.iter().all(|&a| a >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(up.mixture.defensive().map(|d| d.alpha0), m.defensive().map(|d| d.alpha0));
        if let UpdateStatus::ComponentDegenerate(ds) = &up.status {
            for &d in ds {
                prop_assert_eq!(up.mixture.components().mu(d), m.components().mu(d));
            }
        }
    }
}

/// The Gaussian M-step maximises the weighted log-likelihood: no random
/// perturbation of the updated parameters does better.
#[test]
fn gaussian_update_is_argmax() {
    let target = ToyTarget::new(2, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = Mixture::uniform(Components::Gaussian(vec![
        GaussianComponent::new(vec![-0.5, 0.0], SpdMatrix::identity(2)).unwrap(),
        GaussianComponent::new(vec![0.5, 0.3], SpdMatrix::scaled_identity(2, 2.0)).unwrap(),
    ]))
    .unwrap();
    let ws = compute_weights(&target, &m, m.sample_with_labels(50, &mut rng)).unwrap();
    let resp = responsibilities(&ws, &m, Variant::RaoBlackwell).unwrap();
    let up = gaussian_update(&ws, &m, &resp, 1e-12).unwrap();
    let objective = |weights: &[f64], comps: &[(Vec<f64>, SpdMatrix<f64>)]| -> f64 {
        ws.draws()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                (0..2)
                    .map(|d| {
                        ws.w_norm()[i]
                            * resp.get(i, d)
                            * (weights[d].ln() + mvn_logpdf(&x.x, &comps[d].0, &comps[d].1).unwrap())
                    })
                    .sum::<f64>()
            })
            .sum()
    };
    let best: Vec<(Vec<f64>, SpdMatrix<f64>)> =
        (0..2).map(|d| (up.mixture.components().mu(d).to_vec(), up.mixture.components().sigma(d).clone())).collect();
    let best_val = objective(up.mixture.weights(), &best);
    for _ in 0..10_000 {
        let eps = 0.05;
        let mut comps = best.clone();
        for (mu, sigma) in comps.iter_mut() {
            mu.iter_mut().for_each(|v| *v += eps * (rng.random::<f64>() - 0.5));
            let e = sigma.entries();
            let off = eps * (rng.random::<f64>() - 0.5);
            let perturbed = vec![
                e[0] * (1.0 + eps * (rng.random::<f64>() - 0.5)),
                e[1] + off,
                e[2] + off,
                e[3] * (1.0 + eps * (rng.random::<f64>() - 0.5)),
            ];
            if let Ok(s) = SpdMatrix::new(2, perturbed) {
                *sigma = s;
            }
        }
        let a = (up.mixture.weights()[0] + eps * (rng.random::<f64>() - 0.5)).clamp(1e-3, 1.0 - 1e-3);
        let val = objective(&[a, 1.0 - a], &comps);
        assert!(val <= best_val + 1e-12, "perturbation improved objective: {val} > {best_val}");
    }
}

/// Started at the target itself, one update moves the means only by Monte
/// Carlo noise.
#[test]
fn target_is_near_fixed_point() {
    let (p, s, n) = (3usize, 1.5, 20_000usize);
    let target = ToyTarget::new(p, s).unwrap();
    let m = Mixture::uniform(Components::Gaussian(vec![
        GaussianComponent::new(vec![-s; p], SpdMatrix::identity(p)).unwrap(),
        GaussianComponent::new(vec![s; p], SpdMatrix::identity(p)).unwrap(),
    ]))
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ws = compute_weights(&target, &m, m.sample_with_labels(n, &mut rng)).unwrap();
    let resp = responsibilities(&ws, &m, Variant::RaoBlackwell).unwrap();
    let up = gaussian_update(&ws, &m, &resp, 1e-12).unwrap();
    for d in 0..2 {
        let shift: f64 = up
            .mixture
            .components()
            .mu(d)
            .iter()
            .zip(m.components().mu(d))
            .map(|(a, b): (&f64, &f64)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(shift < 5.0 * p as f64 / (n as f64).sqrt(), "component {d} moved {shift}");
    }
}

#[test]
fn labels_follow_effective_weights() {
    let g = |m: f64| GaussianComponent::new(vec![m], SpdMatrix::identity(1)).unwrap();
    let m = Mixture::new(vec![0.2, 0.5, 0.3], Components::Gaussian(vec![g(-1.0), g(0.0), g(1.0)]))
        .unwrap()
        .with_defensive(0.1, g(0.0))
        .unwrap();
    let n = 100_000;
    let draws = m.sample_with_labels(n, &mut ChaCha8Rng::seed_from_u64(8));
    let mut counts = [0usize; 4];
    for d in &draws {
        counts[match d.label {
            Label::Component(k) => k,
            Label::Defensive => 3,
        }] += 1;
    }
    let chi2: f64 = m
        .effective_weights()
        .iter()
        .zip(counts)
        .map(|(w, c)| {
            let e = w * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "χ² = {chi2} ≥ {critical}");
}

#[test]
fn asymptotic_variance_is_consistent() {
    let c = GaussianComponent::new(vec![0.0], SpdMatrix::identity(1)).unwrap();
    let m = Mixture::new(vec![1.0], Components::Gaussian(vec![c.clone()])).unwrap();
    struct StdNormal;
    impl TargetDensity<f64> for StdNormal {
        fn dim(&self) -> usize {
            1
        }
        fn log_unnorm(&self, x: &[f64]) -> f64 {
            -0.5 * x[0] * x[0]
        }
    }
    let ws = compute_weights(&StdNormal, &m, m.sample_with_labels(1_000_000, &mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    let v = asymptotic_variance_estimate(&ws, |x| x[0]).unwrap();
    assert!((v - 1.0).abs() < 0.05, "variance estimate {v}");
}

#[test]
fn toy_modes_kl() {
    let (p, s) = (10usize, 2.0);
    let i = SpdMatrix::identity(p);
    let kl = gaussian_kl(&vec![-s; p], &i, &vec![s; p], &i).unwrap();
    assert!((kl - 2.0 * s * s * p as f64).abs() < 1e-10);
}

#[test]
fn probit_log_posterior_is_concave() {
    let post = ProbitPosterior::<f64>::new(&ProbitDataset::pima());
    let (mle, cov) = post.mle().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ProbitPosterior::<f64>::DIM;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..p).map(|k| mle[k] + 3.0 * cov.get(k, k).sqrt() * (rng.random::<f64>() - 0.5)).collect();
        let h: Vec<f64> = (0..p).map(|k| 1e-3 * cov.get(k, k).sqrt()).collect();
        let f = |b: &[f64]| post.log_unnorm(b);
        let mut hess = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                let at = |da: f64, db: f64| {
                    let mut x = beta.clone();
                    x[a] += da * h[a];
                    x[b] += db * h[b];
                    f(&x)
                };
                hess[a * p + b] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[a] * h[b]);
            }
        }
        // −H scaled to unit marginal steps must be positive semidefinite.
        let scaled: Vec<f64> = (0..p * p)
            .map(|ij| {
                let (a, b) = (ij / p, ij % p);
                let v = -hess[ij] * h[a] * h[b] / 1e-6;
                if a == b { v + 1e-6 } else { v }
            })
            .collect();
        let sym: Vec<f64> = (0..p * p).map(|ij| 0.5 * (scaled[ij] + scaled[(ij % p) * p + ij / p])).collect();
        assert!(SpdMatrix::with_floor(p, sym, 0.0).is_ok(), "Hessian not negative semidefinite at {beta:?}");
    }
}

#[test]
fn runs_are_reproducible() {
    let target = ToyTarget::new(3, 1.0).unwrap();
    let start = GaussianComponent::new(vec![0.0; 3], SpdMatrix::scaled_identity(3, 4.0)).unwrap();
    let go = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = mpmc::adapt::perturbed_gaussian_mixture(&start, 2, 0.1, &mut rng).unwrap();
        let cfg = mpmc::AdaptConfig::new(1000, 5, Variant::RaoBlackwell);
        let out = mpmc::run(&target, m, &cfg, &mut rng).unwrap();
        (out.mixture.to_json().unwrap(), out.sample.w_norm().to_vec())
    };
    assert_eq!(go(), go());
}
