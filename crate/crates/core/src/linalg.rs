//! Dense symmetric positive definite matrices with a cached Cholesky factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest admissible Cholesky pivot. Below this the matrix is reported as
/// not positive definite rather than regularised.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-10;

/// Symmetric positive definite matrix, stored row-major, immutable after
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr", bound = "T: Real")]
pub struct SpdMatrix<T> {
    dim: usize,
    entries: Vec<T>,
    chol: Vec<T>,
    logdet: T,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl<T: Real> TryFrom<MatrixRepr> for SpdMatrix<T> {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        SpdMatrix::new(r.dim, r.entries.into_iter().map(T::of).collect())
    }
}

impl<T: Real> From<SpdMatrix<T>> for MatrixRepr {
    fn from(m: SpdMatrix<T>) -> Self {
        MatrixRepr {
            dim: m.dim,
            entries: m.entries.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

/// Factorises a symmetric matrix given row-major as `entries`.
pub fn chol_factor<T: Real>(dim: usize, entries: Vec<T>) -> Result<SpdMatrix<T>> {
    SpdMatrix::new(dim, entries)
}

impl<T: Real> SpdMatrix<T> {
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        Self::with_floor(dim, entries, T::of(DEFAULT_PIVOT_FLOOR))
    }

    pub fn with_floor(dim: usize, entries: Vec<T>, floor: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        check_symmetric(dim, &entries)?;
        let chol = cholesky(dim, &entries, floor)?;
        let logdet = (0..dim).map(|i| chol[i * dim + i].ln()).sum::<T>() * T::of(2.0);
        Ok(SpdMatrix {
            dim,
            entries,
            chol,
            logdet,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, T::one())
    }

    /// `c * I`; panics if `c` is not positive.
    pub fn scaled_identity(dim: usize, c: T) -> Self {
        let mut entries = vec![T::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = c;
        }
        Self::new(dim, entries).expect("positive multiple of identity")
    }

    pub fn diagonal(diag: &[T]) -> Result<Self> {
        let dim = diag.len();
        let mut entries = vec![T::zero(); dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            entries[i * dim + i] = v;
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.dim + col]
    }

    /// Lower triangular Cholesky factor, row-major.
    pub fn chol(&self) -> &[T] {
        &self.chol
    }

    pub fn logdet(&self) -> T {
        self.logdet
    }

    /// Solves `L y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s = row.iter().zip(&y).fold(b[i], |acc, (&l, &yj)| acc - l * yj);
            y[i] = s / self.chol[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y` by back substitution.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let s = (i + 1..n).fold(y[i], |acc, j| acc - self.chol[j * n + i] * x[j]);
            x[i] = s / self.chol[i * n + i];
        }
        x
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L z`, used to colour standard normal draws.
    pub fn chol_mul(&self, z: &[T]) -> Vec<T> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                self.chol[i * n..=i * n + i]
                    .iter()
                    .zip(z)
                    .fold(T::zero(), |acc, (&l, &zj)| acc + l * zj)
            })
            .collect()
    }

    /// Dense inverse via `n` triangular solve pairs.
    pub fn inverse(&self) -> Vec<T> {
        let n = self.dim;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for col in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[col] = T::one();
            let x = self.solve(&e);
            for row in 0..n {
                inv[row * n + col] = x[row];
            }
        }
        inv
    }
}

fn check_symmetric<T: Real>(dim: usize, a: &[T]) -> Result<()> {
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::of(1e-12).max(T::epsilon() * T::of(32.0)) * scale.max(T::min_positive_value());
    for i in 0..dim {
        for j in i + 1..dim {
            let (u, l) = (a[i * dim + j], a[j * dim + i]);
            if !((u - l).abs() <= tol) {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn cholesky<T: Real>(n: usize, a: &[T], floor: T) -> Result<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut pivot = a[j * n + j];
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if !(pivot > floor) {
            return Err(Error::NotPositiveDefinite {
                row: j,
                pivot: pivot.as_f64(),
            });
        }
        let d = pivot.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}
