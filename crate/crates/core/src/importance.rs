//! Self-normalised importance sampling and its diagnostics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::logsumexp;
use crate::error::{Error, Result};
use crate::mixture::{LabelledDraw, Mixture};
use crate::scalar::Real;
use crate::targets::TargetDensity;

/// Particles from a proposal with their importance weights.
#[derive(Debug, Clone)]
pub struct WeightedSample<T> {
    draws: Vec<LabelledDraw<T>>,
    log_target: Vec<T>,
    log_proposal: Vec<T>,
    log_w_unnorm: Vec<T>,
    w_norm: Vec<T>,
}

impl<T: Real> WeightedSample<T> {
    /// Builds a sample from precomputed log-densities.
    pub fn from_log_densities(draws: Vec<LabelledDraw<T>>, log_target: Vec<T>, log_proposal: Vec<T>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidConfig("empty sample".into()));
        }
        if log_target.len() != draws.len() || log_proposal.len() != draws.len() {
            return Err(Error::DimensionMismatch {
                expected: draws.len(),
                found: log_target.len().min(log_proposal.len()),
            });
        }
        if let Some(i) = log_target.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteTarget(i));
        }
        if log_proposal.iter().any(|v| !v.is_finite()) {
            return Err(Error::ZeroProposalDensity);
        }
        let log_w_unnorm: Vec<T> = log_target.iter().zip(&log_proposal).map(|(&a, &b)| a - b).collect();
        let w_norm = normalise(&log_w_unnorm)?;
        Ok(WeightedSample {
            draws,
            log_target,
            log_proposal,
            log_w_unnorm,
            w_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws[0].x.len()
    }

    pub fn draws(&self) -> &[LabelledDraw<T>] {
        &self.draws
    }

    pub fn log_target(&self) -> &[T] {
        &self.log_target
    }

    pub fn log_proposal(&self) -> &[T] {
        &self.log_proposal
    }

    /// `log π_unn(Xᵢ) − log q(Xᵢ)`.
    pub fn log_w_unnorm(&self) -> &[T] {
        &self.log_w_unnorm
    }

    pub fn w_norm(&self) -> &[T] {
        &self.w_norm
    }

    /// Columns: `index,label,x1..xp,log_w_unnorm,w_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "label".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        header.push("log_w_unnorm".into());
        header.push("w_norm".into());
        wtr.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut row = vec![i.to_string(), d.label.to_string()];
            row.extend(d.x.iter().map(|v| v.to_string()));
            row.push(self.log_w_unnorm[i].to_string());
            row.push(self.w_norm[i].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn normalise<T: Real>(log_w: &[T]) -> Result<Vec<T>> {
    let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::ZeroWeights);
    }
    let shifted: Vec<T> = log_w.iter().map(|&v| (v - max).exp()).collect();
    let total: T = shifted.iter().copied().sum();
    Ok(shifted.into_iter().map(|v| v / total).collect())
}

/// Weights `π_unn(Xᵢ)/q(Xᵢ)`, normalised to sum to one.
pub fn compute_weights<T, G>(target: &G, mixture: &Mixture<T>, draws: Vec<LabelledDraw<T>>) -> Result<WeightedSample<T>>
where
    T: Real,
    G: TargetDensity<T> + ?Sized,
{
    if let Some(d) = draws.iter().find(|d| d.x.len() != target.dim() || d.x.len() != mixture.dim()) {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: d.x.len(),
        });
    }
    let (log_target, log_proposal): (Vec<T>, Vec<T>) = draws
        .par_iter()
        .map(|d| {
            (
                target.log_unnorm(&d.x),
                mixture.logpdf(&d.x).unwrap_or(T::neg_infinity()),
            )
        })
        .unzip();
    WeightedSample::from_log_densities(draws, log_target, log_proposal)
}

/// Weight-quality summary of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Shannon entropy of the normalised weights, in nats.
    pub shannon_entropy: f64,
    /// `exp(H) / N`.
    pub norm_perplexity: f64,
    /// `1 / (N Σ ω̄ᵢ²)`.
    pub norm_ess: f64,
    /// Plug-in estimate of the Kullback-Leibler divergence from target to
    /// proposal.
    pub divergence_estimate: f64,
    pub n: usize,
    /// Set when `norm_ess < 10 / N`; variance estimates are then unreliable.
    pub variance_caveat: bool,
}

pub fn perplexity<T: Real>(ws: &WeightedSample<T>) -> Diagnostics {
    let n = ws.len();
    let entropy: T = -ws
        .w_norm
        .iter()
        .filter(|&&w| w > T::zero())
        .map(|&w| w * w.ln())
        .sum::<T>();
    let sum_sq: T = ws.w_norm.iter().map(|&w| w * w).sum();
    let nf = T::of(n as f64);
    let norm_ess = (T::one() / (nf * sum_sq)).as_f64();
    Diagnostics {
        shannon_entropy: entropy.as_f64(),
        norm_perplexity: (entropy.exp() / nf).as_f64(),
        norm_ess,
        divergence_estimate: divergence_estimate(ws).divergence.as_f64(),
        n,
        variance_caveat: norm_ess < 10.0 / n as f64,
    }
}

/// The two plug-in pieces of the divergence estimate and their combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate<T> {
    /// `Σ ω̄ᵢ log(π_unn/q)(Xᵢ)`, the self-normalised part.
    pub log_ratio_mean: T,
    /// `log((1/N) Σ π_unn/q)`, the plain importance sampling estimate of the
    /// normalising constant.
    pub log_normalising_constant: T,
    /// `log_ratio_mean − log_normalising_constant`.
    pub divergence: T,
}

impl<T: Real> DivergenceEstimate<T> {
    /// `exp(−divergence)`; equals the normalised perplexity.
    pub fn perplexity(&self) -> T {
        (-self.divergence).exp()
    }
}

pub fn divergence_estimate<T: Real>(ws: &WeightedSample<T>) -> DivergenceEstimate<T> {
    let log_ratio_mean: T = ws.w_norm.iter().zip(&ws.log_w_unnorm).map(|(&w, &l)| w * l).sum();
    let log_normalising_constant =
        logsumexp(&ws.log_w_unnorm).expect("weights validated") - T::of(ws.len() as f64).ln();
    DivergenceEstimate {
        log_ratio_mean,
        log_normalising_constant,
        divergence: log_ratio_mean - log_normalising_constant,
    }
}

fn evaluate<T: Real>(ws: &WeightedSample<T>, h: impl Fn(&[T]) -> T) -> Result<Vec<T>> {
    ws.draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let v = h(&d.x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteTestFunction(i))
            }
        })
        .collect()
}

/// `Σ ω̄ᵢ h(Xᵢ)`.
pub fn sn_estimate<T: Real>(ws: &WeightedSample<T>, h: impl Fn(&[T]) -> T) -> Result<T> {
    let values = evaluate(ws, h)?;
    Ok(ws.w_norm.iter().zip(&values).map(|(&w, &v)| w * v).sum())
}

/// `N Σ ω̄ᵢ² (h(Xᵢ) − ĥ)²`, consistent for the asymptotic variance of
/// [`sn_estimate`].
pub fn asymptotic_variance_estimate<T: Real>(ws: &WeightedSample<T>, h: impl Fn(&[T]) -> T) -> Result<T> {
    let values = evaluate(ws, h)?;
    let mean: T = ws.w_norm.iter().zip(&values).map(|(&w, &v)| w * v).sum();
    let acc: T = ws
        .w_norm
        .iter()
        .zip(&values)
        .map(|(&w, &v)| w * w * (v - mean) * (v - mean))
        .sum();
    Ok(T::of(ws.len() as f64) * acc)
}
