//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this (in absolute terms) are clamped to zero when
/// taking PSD square roots.
pub const PSD_CLAMP: f64 = 1e-10;

/// Row-major nested vectors to a matrix. An empty outer vector gives a 0×0 matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// `[-PSD_CLAMP, 0)` are clamped to zero; anything more negative is an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v < -PSD_CLAMP * scale {
            return Err(Error::Input(format!(
                "matrix is not positive semidefinite (eigenvalue {v:.3e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(symmetrize(
        &(q * DMatrix::from_diagonal(&d) * q.transpose()),
    ))
}

pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the eigenvalues; negative means Hurwitz.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Rank of a complex matrix, same tolerance convention as [`numerical_rank`].
pub fn complex_rank(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Frobenius inner product `<a, b> = Tr(aᵀ b)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Dense symmetric positive definite solve, with LU fallback.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}
