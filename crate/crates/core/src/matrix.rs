//! Dense symmetric correlation matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry and unit-diagonal checks use this absolute tolerance.
pub const ENTRY_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue accepted as positive semi-definite.
pub const PSD_TOLERANCE: f64 = -1e-10;

/// Symmetric matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    /// Row-major construction. Entries within tolerance of symmetry or of a
    /// unit diagonal are snapped.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidMatrix(format!(
                "row {} has {} columns, expected {n}",
                i + 1,
                r.len()
            )));
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let x = rows[i][j];
                if !x.is_finite() || x.abs() > 1.0 + ENTRY_TOLERANCE {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) = {x} outside [-1, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j {
                    if (x - 1.0).abs() > ENTRY_TOLERANCE {
                        return Err(Error::InvalidMatrix(format!(
                            "diagonal entry {} is {x}, expected 1",
                            i + 1
                        )));
                    }
                    entries[i * n + j] = 1.0;
                } else {
                    let y = rows[j][i];
                    if (x - y).abs() > ENTRY_TOLERANCE {
                        return Err(Error::InvalidMatrix(format!(
                            "not symmetric at ({}, {}): {x} vs {y}",
                            i + 1,
                            j + 1
                        )));
                    }
                    entries[i * n + j] = (0.5 * (x + y)).clamp(-1.0, 1.0);
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    /// Every off-diagonal entry equal to `rho`.
    pub fn flat(n: usize, rho: f64) -> Result<Self> {
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.to_dmatrix())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.min_eigenvalue() >= PSD_TOLERANCE
    }

    /// Lower-triangular `L` with `L L^T = self`, row-major. Semidefinite
    /// inputs are retried once with `jitter` added to the diagonal.
    pub fn cholesky(&self, jitter: f64) -> Result<Vec<f64>> {
        if let Some(l) = self.to_dmatrix().cholesky() {
            return Ok(row_major(l.l()));
        }
        let mut m = self.to_dmatrix();
        for i in 0..self.n {
            m[(i, i)] += jitter;
        }
        m.cholesky().map(|c| row_major(c.l())).ok_or_else(|| {
            Error::InvalidMatrix(format!(
                "Cholesky factorization failed (smallest eigenvalue {:e})",
                self.min_eigenvalue()
            ))
        })
    }
}

fn row_major(m: DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = m[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(CorrelationMatrix::from_rows(vec![]).is_err());
        assert!(CorrelationMatrix::from_rows(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(vec![vec![0.9, 0.2], vec![0.2, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(vec![vec![1.0, 1.2], vec![1.2, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(vec![vec![1.0, 0.2]]).is_err());
        let m = CorrelationMatrix::from_rows(vec![vec![1.0, 0.2], vec![0.2 + 1e-14, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn eigen_and_cholesky() {
        let m = CorrelationMatrix::flat(3, 0.5).unwrap();
        assert!((m.min_eigenvalue() - 0.5).abs() < 1e-12);
        let l = m.cholesky(1e-12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - m.get(i, j)).abs() < 1e-14);
            }
        }
        // rank one: only the jittered retry succeeds
        let ones = CorrelationMatrix::flat(3, 1.0).unwrap();
        assert!(ones.is_positive_semidefinite());
        assert!(ones.cholesky(1e-12).is_ok());
        // indefinite
        let bad = CorrelationMatrix::flat(3, -0.9).unwrap();
        assert!(!bad.is_positive_semidefinite());
        assert!(matches!(bad.cholesky(1e-12), Err(Error::InvalidMatrix(_))));
    }
}
