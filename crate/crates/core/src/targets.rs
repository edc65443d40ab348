//! Target log-densities: the symmetric two-Gaussian toy problem and the
//! flat-prior probit posterior on the Pima Indians diabetes records.

use std::io::Read;
use std::path::Path;

use crate::density::logsumexp;
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::scalar::Real;

/// Unnormalised log-density over `R^dim`. Evaluation must be pure.
pub trait TargetDensity<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn log_unnorm(&self, x: &[T]) -> T;
}

/// `0.5 N(-s·1, I) + 0.5 N(s·1, I)` in `p` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTarget<T> {
    pub p: usize,
    pub s: T,
}

impl<T: Real> ToyTarget<T> {
    pub fn new(p: usize, s: T) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig("toy target needs p >= 1".into()));
        }
        Ok(ToyTarget { p, s })
    }

    /// Covariance of the target, `I + s² 1 1ᵀ`.
    pub fn covariance(&self) -> SpdMatrix<T> {
        let p = self.p;
        let s2 = self.s * self.s;
        let mut m = vec![s2; p * p];
        for i in 0..p {
            m[i * p + i] += T::one();
        }
        SpdMatrix::new(p, m).expect("I + s² 1 1ᵀ is positive definite")
    }

    /// Checked variant of [`TargetDensity::log_unnorm`].
    pub fn log_density(&self, x: &[T]) -> Result<T> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x.len(),
            });
        }
        Ok(self.log_unnorm(x))
    }
}

impl<T: Real> TargetDensity<T> for ToyTarget<T> {
    fn dim(&self) -> usize {
        self.p
    }

    fn log_unnorm(&self, x: &[T]) -> T {
        let half = T::of(0.5);
        let (mut plus, mut minus) = (T::zero(), T::zero());
        for &v in x {
            plus += (v - self.s) * (v - self.s);
            minus += (v + self.s) * (v + self.s);
        }
        let norm = -half * T::of(self.p as f64) * T::TAU().ln() + half.ln();
        norm + logsumexp(&[-half * plus, -half * minus]).expect("finite terms")
    }
}

/// `log Φ(u)` for the standard normal cdf, accurate far into the left tail.
pub fn std_normal_logcdf<T: Real>(u: T) -> T {
    let uf = u.as_f64();
    let v = if uf > -30.0 {
        (0.5 * statrs::function::erf::erfc(-uf / std::f64::consts::SQRT_2)).ln()
    } else {
        // Φ(u) = φ(u)/|u| · (1 − 1/u² + 3/u⁴ − 15/u⁶ + …)
        let u2 = uf * uf;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..12 {
            term *= -((2 * k - 1) as f64) / u2;
            series += term;
        }
        -0.5 * u2 - (-uf).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    };
    T::of(v)
}

/// `φ(u) / Φ(u)`, the inverse Mills ratio.
fn mills<T: Real>(u: T) -> T {
    let log_phi = -T::of(0.5) * u * u - T::of(0.5) * T::TAU().ln();
    (log_phi - std_normal_logcdf(u)).exp()
}

/// One Pima record: four covariates and the diabetes indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PimaRecord {
    pub npreg: f64,
    pub glu: f64,
    pub bmi: f64,
    pub age: f64,
    pub diabetic: u8,
}

pub const PIMA_ROWS: usize = 532;
pub const PIMA_HEADER: [&str; 5] = ["npreg", "glu", "bmi", "age", "type"];

const PIMA_CSV: &str = include_str!("../data/pima.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitDataset {
    rows: Vec<PimaRecord>,
}

impl ProbitDataset {
    /// The bundled MASS `Pima.tr` + `Pima.te` records.
    pub fn pima() -> Self {
        Self::from_reader(PIMA_CSV.as_bytes()).expect("bundled dataset is valid")
    }

    pub fn rows(&self) -> &[PimaRecord] {
        &self.rows
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != PIMA_HEADER {
            return Err(Error::Dataset(format!(
                "expected header {}, found {}",
                PIMA_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut rows = Vec::with_capacity(PIMA_ROWS);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| -> Result<f64> {
                let raw = rec.get(k).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| {
                    Error::Dataset(format!("line {line}: non-numeric {} value {raw:?}", PIMA_HEADER[k]))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Dataset(format!("line {line}: non-finite {}", PIMA_HEADER[k])))
                }
            };
            let diabetic = match rec.get(4) {
                Some("0") => 0,
                Some("1") => 1,
                other => {
                    return Err(Error::Dataset(format!(
                        "line {line}: response must be 0 or 1, found {:?}",
                        other.unwrap_or("")
                    )))
                }
            };
            rows.push(PimaRecord {
                npreg: field(0)?,
                glu: field(1)?,
                bmi: field(2)?,
                age: field(3)?,
                diabetic,
            });
        }
        if rows.len() != PIMA_ROWS {
            return Err(Error::Dataset(format!("expected {PIMA_ROWS} rows, found {}", rows.len())));
        }
        Ok(ProbitDataset { rows })
    }
}

pub fn load_pima_csv(path: impl AsRef<Path>) -> Result<ProbitDataset> {
    ProbitDataset::from_reader(std::fs::File::open(path)?)
}

/// Flat-prior probit posterior over `β = (β₀, β₁..β₄)`, covariates unscaled.
#[derive(Debug, Clone)]
pub struct ProbitPosterior<T> {
    design: Vec<[T; 5]>,
    response: Vec<bool>,
}

impl<T: Real> ProbitPosterior<T> {
    pub const DIM: usize = 5;

    pub fn new(data: &ProbitDataset) -> Self {
        let design = data
            .rows()
            .iter()
            .map(|r| [T::one(), T::of(r.npreg), T::of(r.glu), T::of(r.bmi), T::of(r.age)])
            .collect();
        let response = data.rows().iter().map(|r| r.diabetic == 1).collect();
        ProbitPosterior { design, response }
    }

    fn linear_predictor(row: &[T; 5], beta: &[T]) -> T {
        row.iter().zip(beta).map(|(&a, &b)| a * b).sum()
    }

    /// Maximum likelihood estimate by Newton's method, with the inverse
    /// observed information as its covariance.
    pub fn mle(&self) -> Result<(Vec<T>, SpdMatrix<T>)> {
        let mut beta = vec![T::zero(); 5];
        let mut last = self.log_unnorm(&beta);
        for _ in 0..100 {
            let (grad, info) = self.gradient_and_information(&beta)?;
            let step = info.solve(&grad);
            let mut scale = T::one();
            let mut next;
            loop {
                next = beta.iter().zip(&step).map(|(&b, &s)| b + scale * s).collect::<Vec<_>>();
                if self.log_unnorm(&next) >= last || scale < T::of(1e-8) {
                    break;
                }
                scale *= T::of(0.5);
            }
            let value = self.log_unnorm(&next);
            let moved = step.iter().map(|s| (scale * *s).abs()).fold(T::zero(), T::max);
            beta = next;
            last = value;
            if moved < T::of(1e-12) {
                break;
            }
        }
        let (_, info) = self.gradient_and_information(&beta)?;
        let cov = info.inverse();
        // symmetrise before refactoring
        let mut sym = cov.clone();
        for i in 0..5 {
            for j in 0..5 {
                sym[i * 5 + j] = T::of(0.5) * (cov[i * 5 + j] + cov[j * 5 + i]);
            }
        }
        Ok((beta, SpdMatrix::new(5, sym)?))
    }

    /// Gradient of the log-likelihood and the observed information (negative
    /// Hessian) at `beta`.
    pub fn gradient_and_information(&self, beta: &[T]) -> Result<(Vec<T>, SpdMatrix<T>)> {
        let mut grad = vec![T::zero(); 5];
        let mut info = vec![T::zero(); 25];
        for (row, &y) in self.design.iter().zip(&self.response) {
            let eta = Self::linear_predictor(row, beta);
            // d/dη log Φ(±η) and the matching curvature
            let (g, w) = if y {
                let l = mills(eta);
                (l, l * (eta + l))
            } else {
                let l = mills(-eta);
                (-l, l * (l - eta))
            };
            for i in 0..5 {
                grad[i] += g * row[i];
                for j in 0..5 {
                    info[i * 5 + j] += w * row[i] * row[j];
                }
            }
        }
        Ok((grad, SpdMatrix::new(5, info)?))
    }
}

impl<T: Real> TargetDensity<T> for ProbitPosterior<T> {
    fn dim(&self) -> usize {
        Self::DIM
    }

    fn log_unnorm(&self, beta: &[T]) -> T {
        self.design
            .iter()
            .zip(&self.response)
            .map(|(row, &y)| {
                let eta = Self::linear_predictor(row, beta);
                std_normal_logcdf(if y { eta } else { -eta })
            })
            .sum()
    }
}
