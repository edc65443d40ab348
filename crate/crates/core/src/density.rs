//! Log-density primitives and samplers built on [`SpdMatrix`].
//!
//! Everything is computed in log space; mixture densities are assembled with
//! [`logsumexp`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::scalar::Real;

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `(x - mu)ᵀ Σ⁻¹ (x - mu)` through one forward solve.
pub fn mahalanobis_sq<T: Real>(x: &[T], mu: &[T], sigma: &SpdMatrix<T>) -> Result<T> {
    check_dim(sigma.dim(), x.len())?;
    check_dim(sigma.dim(), mu.len())?;
    Ok(mahalanobis_sq_unchecked(x, mu, sigma))
}

pub(crate) fn mahalanobis_sq_unchecked<T: Real>(x: &[T], mu: &[T], sigma: &SpdMatrix<T>) -> T {
    let diff: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
    sigma.solve_lower(&diff).iter().map(|&v| v * v).sum()
}

pub fn mvn_logpdf<T: Real>(x: &[T], mu: &[T], sigma: &SpdMatrix<T>) -> Result<T> {
    let m = mahalanobis_sq(x, mu, sigma)?;
    Ok(mvn_log_from_maha(m, sigma))
}

pub(crate) fn mvn_log_from_maha<T: Real>(maha: T, sigma: &SpdMatrix<T>) -> T {
    let p = T::of(sigma.dim() as f64);
    let half = T::of(0.5);
    -half * (p * (T::TAU()).ln() + sigma.logdet() + maha)
}

/// Multivariate Student-t with location `mu`, scale matrix `sigma` and `nu`
/// degrees of freedom.
pub fn mvt_logpdf<T: Real>(x: &[T], nu: T, mu: &[T], sigma: &SpdMatrix<T>) -> Result<T> {
    if !(nu > T::zero()) {
        return Err(Error::NonPositiveDof(nu.as_f64()));
    }
    let m = mahalanobis_sq(x, mu, sigma)?;
    Ok(mvt_log_from_maha(m, nu, sigma))
}

pub(crate) fn mvt_log_from_maha<T: Real>(maha: T, nu: T, sigma: &SpdMatrix<T>) -> T {
    let p = T::of(sigma.dim() as f64);
    let half = T::of(0.5);
    let a = half * (nu + p);
    a.ln_gamma() - (half * nu).ln_gamma() - half * p * (nu * T::PI()).ln() - half * sigma.logdet()
        - a * (maha / nu).ln_1p()
}

/// `log Σ exp(v_i)` with max-shift.
pub fn logsumexp<T: Real>(v: &[T]) -> Result<T> {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max.is_nan() {
        return Err(Error::EmptyLogSumExp);
    }
    if max == T::infinity() {
        return Ok(max);
    }
    let s: T = v.iter().map(|&a| (a - max).exp()).sum();
    Ok(max + s.ln())
}

/// `mu + L z` with `z` standard normal.
pub fn sample_mvn<T: Real, R: Rng + ?Sized>(mu: &[T], sigma: &SpdMatrix<T>, rng: &mut R) -> Vec<T> {
    let z: Vec<T> = (0..sigma.dim()).map(|_| T::std_normal(rng)).collect();
    sigma
        .chol_mul(&z)
        .into_iter()
        .zip(mu)
        .map(|(a, &m)| m + a)
        .collect()
}

/// Normal / chi-squared construction: `y ~ χ²_ν`, `x ~ N(mu, ν Σ / y)`.
/// Returns the draw together with its latent `y`.
pub fn sample_mvt<T: Real, R: Rng + ?Sized>(
    nu: T,
    mu: &[T],
    sigma: &SpdMatrix<T>,
    rng: &mut R,
) -> Result<(Vec<T>, T)> {
    if !(nu > T::zero()) {
        return Err(Error::NonPositiveDof(nu.as_f64()));
    }
    Ok(sample_mvt_unchecked(nu, mu, sigma, rng))
}

pub(crate) fn sample_mvt_unchecked<T: Real, R: Rng + ?Sized>(
    nu: T,
    mu: &[T],
    sigma: &SpdMatrix<T>,
    rng: &mut R,
) -> (Vec<T>, T) {
    let two = T::of(2.0);
    let y = T::gamma(nu / two, two, rng);
    let scale = (nu / y).sqrt();
    let z: Vec<T> = (0..sigma.dim()).map(|_| T::std_normal(rng)).collect();
    let x = sigma
        .chol_mul(&z)
        .into_iter()
        .zip(mu)
        .map(|(a, &m)| m + scale * a)
        .collect();
    (x, y)
}

/// Closed-form `KL(N(mu1, sigma1) ‖ N(mu2, sigma2))`.
pub fn gaussian_kl<T: Real>(
    mu1: &[T],
    sigma1: &SpdMatrix<T>,
    mu2: &[T],
    sigma2: &SpdMatrix<T>,
) -> Result<T> {
    let p = sigma1.dim();
    check_dim(p, sigma2.dim())?;
    let maha = mahalanobis_sq(mu1, mu2, sigma2)?;
    // tr(Σ₂⁻¹ Σ₁) = ‖L₂⁻¹ L₁‖²_F
    let l1 = sigma1.chol();
    let mut trace = T::zero();
    for c in 0..p {
        let col: Vec<T> = (0..p).map(|r| l1[r * p + c]).collect();
        trace += sigma2.solve_lower(&col).iter().map(|&v| v * v).sum::<T>();
    }
    let half = T::of(0.5);
    let kl = half * (trace + maha - T::of(p as f64) + sigma2.logdet() - sigma1.logdet());
    Ok(kl.max(T::zero()))
}
