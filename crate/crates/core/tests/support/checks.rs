//! Deterministic property checks over seeded random instances. Each returns
//! `Err` with a description of the first violation.

use mpmc::adapt::{gaussian_update, responsibilities, student_t_update, t_scale_weight};
use mpmc::{
    asymptotic_variance_estimate, compute_weights, divergence_estimate, mahalanobis_sq, mvn_logpdf, perplexity,
    sample_mvt, sn_estimate, Components, GaussianComponent, Label, LabelledDraw, Mixture, SpdMatrix,
    StudentTComponent, TargetDensity, ToyTarget, Variant, WeightedSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = fn() -> Result<(), String>;

pub const ALL: &[(&str, Check)] = &[
    ("weight normalisation", weight_normalisation),
    ("perplexity and ESS bounds", perplexity_ess_bounds),
    ("divergence estimate identity", divergence_identity),
    ("target scale invariance", scale_invariance),
    ("responsibility rows sum to one", responsibility_rows),
    ("Rao-Blackwell indicator expectation", rao_blackwell_expectation),
    ("Gaussian update stationarity", gaussian_stationarity),
    ("t latent scale posterior mean", t_scale_posterior),
    ("defensive weight bound", defensive_bound),
    ("large-dof t update matches Gaussian", t_gaussian_limit),
];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(mu: Vec<f64>, var: f64) -> GaussianComponent<f64> {
    let p = mu.len();
    GaussianComponent::new(mu, SpdMatrix::scaled_identity(p, var)).unwrap()
}

/// Two Gaussians plus a broad defensive component in three dimensions.
fn proposal() -> Mixture<f64> {
    Mixture::new(
        vec![0.3, 0.7],
        Components::Gaussian(vec![gauss(vec![-1.0, 0.0, 1.0], 1.5), gauss(vec![1.5, 1.0, -0.5], 0.8)]),
    )
    .unwrap()
    .with_defensive(0.1, gauss(vec![0.0; 3], 5.0))
    .unwrap()
}

fn toy_sample(seed: u64, n: usize) -> (ToyTarget<f64>, Mixture<f64>, WeightedSample<f64>) {
    let target = ToyTarget::new(3, 1.5).unwrap();
    let m = proposal();
    let draws = m.sample_with_labels(n, &mut rng(seed));
    let ws = compute_weights(&target, &m, draws).unwrap();
    (target, m, ws)
}

pub fn weight_normalisation() -> Result<(), String> {
    for seed in 0..20 {
        let (_, _, ws) = toy_sample(seed, 1 + 97 * seed as usize);
        let total: f64 = ws.w_norm().iter().sum();
        ensure((total - 1.0).abs() <= 1e-12, || format!("seed {seed}: Σω̄ = {total}"))?;
        ensure(ws.w_norm().iter().all(|&w| w >= 0.0), || format!("seed {seed}: negative weight"))?;
    }
    Ok(())
}

pub fn perplexity_ess_bounds() -> Result<(), String> {
    for seed in 0..20 {
        let n = 1 + 53 * seed as usize;
        let (_, _, ws) = toy_sample(seed, n);
        let d = perplexity(&ws);
        let lo = 1.0 / n as f64 - 1e-12;
        for (name, v) in [("perplexity", d.norm_perplexity), ("ess", d.norm_ess)] {
            ensure(v >= lo && v <= 1.0 + 1e-12, || format!("seed {seed}: {name} = {v} outside [1/{n}, 1]"))?;
        }
    }
    Ok(())
}

pub fn divergence_identity() -> Result<(), String> {
    for seed in 0..20 {
        let (_, _, ws) = toy_sample(seed, 500);
        let a = divergence_estimate(&ws).perplexity();
        let b = perplexity(&ws).norm_perplexity;
        ensure((a - b).abs() <= 1e-10, || format!("seed {seed}: exp(-Ê) = {a}, perplexity = {b}"))?;
    }
    Ok(())
}

pub fn scale_invariance() -> Result<(), String> {
    let (_, _, ws) = toy_sample(3, 1000);
    let summary = |ws: &WeightedSample<f64>| {
        let d = perplexity(ws);
        (
            ws.w_norm().to_vec(),
            [
                d.norm_perplexity,
                d.norm_ess,
                sn_estimate(ws, |x| x[0]).unwrap(),
                asymptotic_variance_estimate(ws, |x| x[0]).unwrap(),
            ],
        )
    };
    let (w_ref, s_ref) = summary(&ws);
    for c in [1e-30f64, 1.0, 1e30] {
        let shifted: Vec<f64> = ws.log_target().iter().map(|l| l + c.ln()).collect();
        let other =
            WeightedSample::from_log_densities(ws.draws().to_vec(), shifted, ws.log_proposal().to_vec()).unwrap();
        let (w, s) = summary(&other);
        let wmax = w.iter().zip(&w_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(wmax <= 1e-10, || format!("c = {c}: weights moved by {wmax}"))?;
        for (k, (a, b)) in s.iter().zip(&s_ref).enumerate() {
            ensure((a - b).abs() <= 1e-10 * b.abs().max(1.0), || format!("c = {c}: summary {k}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

pub fn responsibility_rows() -> Result<(), String> {
    let m = proposal();
    let mut r = rng(11);
    for i in 0..2000 {
        let x: Vec<f64> = (0..3).map(|_| 6.0 * (r.random::<f64>() - 0.5)).collect();
        let rho = m.component_posteriors(&x).map_err(|e| e.to_string())?;
        let total: f64 = rho.iter().sum();
        ensure(rho.iter().all(|&v| v >= 0.0) && (total - 1.0).abs() <= 1e-12, || {
            format!("point {i}: ρ = {rho:?}")
        })?;
    }
    Ok(())
}

/// Redraws labels from ρ given fixed particles; the average plain indicator
/// matrix and plain weight update must match the Rao-Blackwellised ones.
pub fn rao_blackwell_expectation() -> Result<(), String> {
    let target = ToyTarget::new(1, 1.0).unwrap();
    let m = Mixture::new(vec![0.4, 0.6], Components::Gaussian(vec![gauss(vec![-0.5], 1.0), gauss(vec![0.8], 2.0)]))
        .unwrap();
    let mut r = rng(5);
    let draws = m.sample_with_labels(30, &mut r);
    let ws = compute_weights(&target, &m, draws).map_err(|e| e.to_string())?;
    let rb = responsibilities(&ws, &m, Variant::RaoBlackwell).map_err(|e| e.to_string())?;
    let rb_alpha = gaussian_update(&ws, &m, &rb, 1e-12).map_err(|e| e.to_string())?.mixture.weights()[0];
    let reps = 10_000;
    let n = ws.len();
    let mut sum_xi = vec![0.0; n];
    let mut alpha = Vec::with_capacity(reps);
    for _ in 0..reps {
        let relabelled: Vec<LabelledDraw<f64>> = ws
            .draws()
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let k = usize::from(r.random::<f64>() >= rb.get(i, 0));
                LabelledDraw { x: d.x.clone(), label: Label::Component(k), scale: None }
            })
            .collect();
        let plain_ws =
            WeightedSample::from_log_densities(relabelled, ws.log_target().to_vec(), ws.log_proposal().to_vec())
                .map_err(|e| e.to_string())?;
        let xi = responsibilities(&plain_ws, &m, Variant::Plain).map_err(|e| e.to_string())?;
        for (i, s) in sum_xi.iter_mut().enumerate() {
            *s += xi.get(i, 0);
        }
        let up = gaussian_update(&plain_ws, &m, &xi, 1e-12).map_err(|e| e.to_string())?;
        alpha.push(up.mixture.weights()[0]);
    }
    for (i, total) in sum_xi.iter().enumerate() {
        let p = rb.get(i, 0);
        let mean = total / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt().max(1e-12);
        ensure((mean - p).abs() <= 4.0 * se, || format!("particle {i}: mean ξ = {mean}, ρ = {p}"))?;
    }
    let mean = alpha.iter().sum::<f64>() / reps as f64;
    let var = alpha.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    ensure((mean - rb_alpha).abs() <= 4.0 * se, || format!("mean plain α = {mean}, RB α = {rb_alpha} (se {se})"))
}

/// The weighted log-likelihood has zero gradient in μ at the updated
/// parameters.
pub fn gaussian_stationarity() -> Result<(), String> {
    let (_, m, ws) = toy_sample(7, 3000);
    for variant in [Variant::Plain, Variant::RaoBlackwell] {
        let resp = responsibilities(&ws, &m, variant).map_err(|e| e.to_string())?;
        let up = gaussian_update(&ws, &m, &resp, 1e-12).map_err(|e| e.to_string())?;
        let Components::Gaussian(comps) = up.mixture.components() else { unreachable!() };
        for (d, c) in comps.iter().enumerate() {
            let loglik = |mu: &[f64]| -> f64 {
                ws.draws()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| ws.w_norm()[i] * resp.get(i, d) * mvn_logpdf(&x.x, mu, &c.sigma).unwrap())
                    .sum()
            };
            let h = 1e-5;
            for k in 0..c.mu.len() {
                let (mut up_mu, mut down_mu) = (c.mu.clone(), c.mu.clone());
                up_mu[k] += h;
                down_mu[k] -= h;
                let g = (loglik(&up_mu) - loglik(&down_mu)) / (2.0 * h);
                ensure(g.abs() <= 1e-6, || format!("{variant:?} component {d}: ∂L/∂μ_{k} = {g}"))?;
            }
        }
    }
    Ok(())
}

/// `E[y/ν | x] = (ν+p)/(ν+maha)`: checked through `E[(y/ν − γ(x)) g(x)] = 0`
/// for a few test functions.
pub fn t_scale_posterior() -> Result<(), String> {
    let nu = 4.0;
    let sigma = SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let comp = StudentTComponent::new(nu, vec![0.5, -1.0], sigma.clone()).unwrap();
    let mut r = rng(9);
    type TestFn = fn(&[f64], f64) -> f64;
    let tests: [(&str, TestFn); 3] =
        [("1", |_, _| 1.0), ("maha", |_, m| m), ("x1 > mu1", |x, _| if x[0] > 0.5 { 1.0 } else { 0.0 })];
    let n = 200_000;
    let mut diffs = vec![Vec::with_capacity(n); tests.len()];
    for _ in 0..n {
        let (x, y) = sample_mvt(nu, &comp.mu, &sigma, &mut r).unwrap();
        let maha = mahalanobis_sq(&x, &comp.mu, &sigma).unwrap();
        let gamma = t_scale_weight(&comp, &x);
        for (k, (_, g)) in tests.iter().enumerate() {
            diffs[k].push((y / nu - gamma) * g(&x, maha));
        }
    }
    for ((name, _), d) in tests.iter().zip(&diffs) {
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        ensure(mean.abs() <= 3.0 * se, || format!("g = {name}: mean difference {mean}, se {se}"))?;
    }
    Ok(())
}

pub fn defensive_bound() -> Result<(), String> {
    let (target, m, ws) = toy_sample(13, 5000);
    let def = m.defensive().unwrap();
    let total: f64 = ws.log_w_unnorm().iter().map(|l| l.exp()).sum();
    for (i, d) in ws.draws().iter().enumerate() {
        let bound = (target.log_unnorm(&d.x) - def.alpha0.ln() - mvn_logpdf(&d.x, &def.q0.mu, &def.q0.sigma).unwrap())
            .exp()
            / total;
        let w = ws.w_norm()[i];
        ensure(w <= bound * (1.0 + 1e-12), || format!("particle {i}: ω̄ = {w} > bound {bound}"))?;
    }
    Ok(())
}

pub fn t_gaussian_limit() -> Result<(), String> {
    let (_, g_mix, ws) = {
        let target = ToyTarget::new(3, 1.5).unwrap();
        let m = Mixture::new(
            vec![0.3, 0.7],
            Components::Gaussian(vec![gauss(vec![-1.0, 0.0, 1.0], 1.5), gauss(vec![1.5, 1.0, -0.5], 0.8)]),
        )
        .unwrap();
        let draws = m.sample_with_labels(4000, &mut rng(17));
        let ws = compute_weights(&target, &m, draws).unwrap();
        (target, m, ws)
    };
    let Components::Gaussian(gs) = g_mix.components() else { unreachable!() };
    let t_mix = Mixture::new(
        g_mix.weights().to_vec(),
        Components::StudentT(
            gs.iter().map(|g| StudentTComponent::new(1e6, g.mu.clone(), g.sigma.clone()).unwrap()).collect(),
        ),
    )
    .unwrap();
    let resp = responsibilities(&ws, &g_mix, Variant::RaoBlackwell).map_err(|e| e.to_string())?;
    let gu = gaussian_update(&ws, &g_mix, &resp, 1e-12).map_err(|e| e.to_string())?.mixture;
    let tu = student_t_update(&ws, &t_mix, &resp, 1e-12).map_err(|e| e.to_string())?.mixture;
    for d in 0..2 {
        let (gc, tc) = (gu.components(), tu.components());
        let mu_err = gc.mu(d).iter().zip(tc.mu(d)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sig_err = gc
            .sigma(d)
            .entries()
            .iter()
            .zip(tc.sigma(d).entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(mu_err <= 1e-3 && sig_err <= 1e-3, || format!("component {d}: |Δμ| = {mu_err}, |ΔΣ| = {sig_err}"))?;
        ensure((gu.weights()[d] - tu.weights()[d]).abs() <= 1e-12, || format!("component {d}: weights differ"))?;
    }
    Ok(())
}
