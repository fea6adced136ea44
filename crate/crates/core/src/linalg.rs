//! Dense symmetric matrices and the cyclic Jacobi eigenvalue algorithm.
//!
//! The matrices handled here are small (one row per functional component),
//! so a plain row-major `Vec<Vec<f64>>` is adequate and serializes directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix(pub Vec<Vec<f64>>);

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix(vec![vec![0.0; n]; n])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Matrix((0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect())
    }

    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[i][j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.0.iter().all(|r| r.len() == self.0.len())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        self.is_square()
            && (0..n).all(|i| (0..i).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Entrywise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix(self.0.iter().map(|r| r.iter().map(|v| v * s).collect()).collect())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.0
            .iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Eigendecomposition `A = Q Λ Qᵀ` with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    /// Column `k` holds the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Matrix,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        Matrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| q.get(i, k) * self.eigenvalues[k] * q.get(j, k))
                .sum()
        })
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix.
///
/// Each rotation annihilates one off-diagonal entry; sweeps run over all
/// pairs until the off-diagonal mass drops below `1e-15` relative to the
/// Frobenius norm (or is exactly zero).
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.n();
    if !a.is_square() {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(Error::InvalidParameter("matrix must be symmetric".into()));
    }
    let mut m = a.0.clone();
    let mut v = Matrix::identity(n).0;
    let frob: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p][q] * m[p][q])
            .sum::<f64>()
            .sqrt();
        if off == 0.0 || off <= 1e-15 * frob {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let eigenvalues = order.iter().map(|&k| m[k][k]).collect();
    let eigenvectors = Matrix::from_fn(n, |i, j| v[i][order[j]]);
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}
