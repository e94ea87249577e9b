//! Floored covariance matrices shared by the Gaussian scorer and the GMM.
//!
//! The floor is a lower bound on eigenvalues: diagonal variances are clamped
//! with `max(var, floor)`, full matrices have their spectrum clipped the same
//! way. Clipping is the exact maximiser of the Gaussian likelihood under the
//! constraint `Σ ⪰ floor·I`, which keeps EM monotone.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceType {
    Diagonal,
    Full,
}

impl CovarianceType {
    /// Full up to 64 dimensions, diagonal above.
    pub fn default_for_dim(d: usize) -> Self {
        if d > 64 {
            CovarianceType::Diagonal
        } else {
            CovarianceType::Full
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal {
        variances: Vec<f64>,
    },
    Full {
        /// Row-major `D x D`.
        matrix: Vec<f64>,
        /// Lower Cholesky factor, row-major `D x D`.
        chol: Vec<f64>,
        dim: usize,
    },
}

impl Covariance {
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        Covariance::Diagonal {
            variances: vec![variance; dim],
        }
    }

    pub fn from_diagonal(variances: Vec<f64>, floor: f64) -> Self {
        Covariance::Diagonal {
            variances: variances.into_iter().map(|v| v.max(floor)).collect(),
        }
    }

    /// Builds a full covariance from a symmetric row-major `dim x dim` matrix,
    /// clipping its eigenvalues from below at `floor`.
    pub fn from_full(matrix: &[f64], dim: usize, floor: f64) -> Self {
        assert_eq!(matrix.len(), dim * dim, "covariance shape");
        let m = DMatrix::from_row_slice(dim, dim, matrix);
        let sym = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let clipped = eig.eigenvalues.map(|l| l.max(floor));
        let rebuilt = &eig.eigenvectors
            * DMatrix::from_diagonal(&clipped)
            * eig.eigenvectors.transpose();
        let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        let chol = match rebuilt.clone().cholesky() {
            Some(c) => c.l(),
            // rounding can leave a tiny negative pivot when every eigenvalue sits at the floor
            None => (rebuilt.clone() + DMatrix::identity(dim, dim) * floor)
                .cholesky()
                .expect("floored covariance is positive definite")
                .l(),
        };
        Covariance::Full {
            matrix: row_major(&rebuilt),
            chol: row_major(&chol),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal { variances } => variances.len(),
            Covariance::Full { dim, .. } => *dim,
        }
    }

    /// Natural log of the determinant.
    pub fn log_det(&self) -> f64 {
        match self {
            Covariance::Diagonal { variances } => variances.iter().map(|v| v.ln()).sum(),
            Covariance::Full { chol, dim, .. } => {
                2.0 * (0..*dim).map(|i| chol[i * dim + i].ln()).sum::<f64>()
            }
        }
    }

    /// `diffᵀ Σ⁻¹ diff`.
    pub fn mahalanobis_sq(&self, diff: &[f64]) -> f64 {
        match self {
            Covariance::Diagonal { variances } => {
                diff.iter().zip(variances).map(|(d, v)| d * d / v).sum()
            }
            Covariance::Full { chol, dim, .. } => {
                // forward substitution L y = diff, result is ‖y‖²
                let n = *dim;
                let mut y = vec![0.0; n];
                let mut acc = 0.0;
                for i in 0..n {
                    let row = &chol[i * n..i * n + i];
                    let s: f64 = row.iter().zip(&y[..i]).map(|(l, yj)| l * yj).sum();
                    y[i] = (diff[i] - s) / chol[i * n + i];
                    acc += y[i] * y[i];
                }
                acc
            }
        }
    }

    /// Diagonal entries of the matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            Covariance::Diagonal { variances } => variances.clone(),
            Covariance::Full { matrix, dim, .. } => (0..*dim).map(|i| matrix[i * dim + i]).collect(),
        }
    }

    /// Dense row-major matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Covariance::Diagonal { variances } => {
                let d = variances.len();
                let mut m = vec![0.0; d * d];
                for (i, v) in variances.iter().enumerate() {
                    m[i * d + i] = *v;
                }
                m
            }
            Covariance::Full { matrix, .. } => matrix.clone(),
        }
    }

    /// Smallest eigenvalue; used by tests to check positive definiteness.
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Covariance::Diagonal { variances } => {
                variances.iter().copied().fold(f64::INFINITY, f64::min)
            }
            Covariance::Full { matrix, dim, .. } => {
                let m = DMatrix::from_row_slice(*dim, *dim, matrix);
                SymmetricEigen::new(m).eigenvalues.min()
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Weighted covariance `Σ w_i (x_i - mean)(x_i - mean)ᵀ / Σ w_i` in the given
/// structure, floored. `weights = None` means uniform.
pub(crate) fn weighted_covariance<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    weights: Option<&[f64]>,
    mean: &[f64],
    kind: CovarianceType,
    floor: f64,
) -> Covariance {
    let d = mean.len();
    let mut total = 0.0;
    match kind {
        CovarianceType::Diagonal => {
            let mut acc = vec![0.0; d];
            for (i, r) in rows.enumerate() {
                let w = weights.map_or(1.0, |w| w[i]);
                total += w;
                for j in 0..d {
                    let c = r[j] - mean[j];
                    acc[j] += w * c * c;
                }
            }
            if total > 0.0 {
                acc.iter_mut().for_each(|a| *a /= total);
            }
            Covariance::from_diagonal(acc, floor)
        }
        CovarianceType::Full => {
            let mut acc = DMatrix::<f64>::zeros(d, d);
            let mut centered = DVector::<f64>::zeros(d);
            for (i, r) in rows.enumerate() {
                let w = weights.map_or(1.0, |w| w[i]);
                total += w;
                for j in 0..d {
                    centered[j] = r[j] - mean[j];
                }
                acc.syger(w, &centered, &centered, 1.0);
            }
            if total > 0.0 {
                acc /= total;
            }
            acc.fill_upper_triangle_with_lower_triangle();
            Covariance::from_full(&row_major(&acc), d, floor)
        }
    }
}
