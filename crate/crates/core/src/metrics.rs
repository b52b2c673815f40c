//! Symmetric positive semidefinite metric matrices and their norms.
//!
//! Every region of the distance model carries one of these as its local
//! metric; the trainer keeps them inside the PSD cone by re-projecting
//! after each gradient step.

use nalgebra::{DMatrix, DVector};

/// Quadratic forms this close to zero (or below) are treated as exactly
/// zero before taking square roots, so rounding noise near a zero
/// distance cannot produce NaN.
pub const QUADRATIC_FORM_FLOOR: f64 = 1e-12;

/// A dense d×d metric matrix.
///
/// The struct itself only guarantees squareness and finite entries;
/// symmetry and positive semidefiniteness are established by
/// [`MetricMatrix::project_psd`] and checked by the validation helpers.
/// Gradient-checking code deliberately evaluates quadratic forms at
/// slightly asymmetric matrices (each entry is an independent parameter
/// there), so symmetry is not a hard constructor invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    mat: DMatrix<f64>,
}

impl MetricMatrix {
    /// Wraps a square matrix with finite entries.
    ///
    /// # Panics
    /// Panics if the matrix is not square or contains non-finite entries.
    pub fn new(mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "metric matrix must be square");
        assert!(
            mat.iter().all(|v| v.is_finite()),
            "metric matrix entries must be finite"
        );
        Self { mat }
    }

    /// The identity metric in dimension `dim` (plain Euclidean geometry).
    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// The Mahalanobis length sqrt((x_i - x_j)^T M (x_i - x_j)).
    ///
    /// This is the non-squared form. Quadratic forms within
    /// [`QUADRATIC_FORM_FLOOR`] of zero are clamped to zero before the
    /// root.
    ///
    /// # Panics
    /// Panics if the vector dimensions do not match the metric.
    pub fn mahalanobis_length(&self, x_i: &DVector<f64>, x_j: &DVector<f64>) -> f64 {
        self.quadratic_form(x_i, x_j).max(0.0).sqrt()
    }

    /// The raw quadratic form (x_i - x_j)^T M (x_i - x_j), with the
    /// near-zero clamp applied but no square root.
    pub fn quadratic_form(&self, x_i: &DVector<f64>, x_j: &DVector<f64>) -> f64 {
        assert_eq!(x_i.len(), self.dim(), "vector/metric dimension mismatch");
        assert_eq!(x_j.len(), self.dim(), "vector/metric dimension mismatch");
        let diff = x_i - x_j;
        let q = (&diff.transpose() * &self.mat * &diff)[(0, 0)];
        if q.abs() < QUADRATIC_FORM_FLOOR || q < 0.0 {
            // Within floating-point noise of zero; a PSD metric cannot
            // produce a genuinely negative form.
            0.0
        } else {
            q
        }
    }

    /// Projects onto the PSD cone: symmetrize as (M + M^T)/2, then clip
    /// every eigenvalue at `floor`.
    ///
    /// For a symmetric input this is the Frobenius-nearest matrix with
    /// eigenvalues >= floor; already-conforming inputs are fixed points
    /// up to eigensolver rounding.
    pub fn project_psd(&self, floor: f64) -> MetricMatrix {
        let sym = (&self.mat + self.mat.transpose()) * 0.5;
        let mut eig = sym.symmetric_eigen();
        for v in eig.eigenvalues.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
        let recomposed = eig.recompose();
        // recompose() can leave ~1e-17 asymmetry; tidy it up so the
        // symmetry invariant holds exactly.
        let tidy = (&recomposed + recomposed.transpose()) * 0.5;
        MetricMatrix::new(tidy)
    }

    /// Frobenius norm sqrt(sum of squared entries).
    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// sqrt(lambda_max(M)) for PSD M: the operator norm of any factor L
    /// with M = L L^T.
    pub fn spectral_sqrt_norm(&self) -> f64 {
        let sym = (&self.mat + self.mat.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max).max(0.0).sqrt()
    }

    /// True when entries are pairwise symmetric within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.mat[(i, j)] - self.mat[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// True when every eigenvalue of the symmetrized matrix is >= -tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        let sym = (&self.mat + self.mat.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        eig.eigenvalues.iter().all(|&v| v >= -tol)
    }
}
