//! Shared dense symmetric linear algebra helpers.
//!
//! Everything here goes through a symmetric eigendecomposition so that the
//! rank-deficient (`lambda = 0`) paths are rank-revealing.

use nalgebra::{DMatrix, SymmetricEigen};

/// Rank cutoff for a symmetric matrix: eigenvalues with absolute value below
/// `max_dim * ulp(max_abs_eig)` are treated as zero.
pub fn rank_tolerance(max_dim: usize, max_abs_eig: f64) -> f64 {
    max_dim as f64 * f64::EPSILON * max_abs_eig
}

/// Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition.
/// Returns the pseudoinverse and the numerical rank.
pub fn sym_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = rank_tolerance(n, max_abs);
    let mut rank = 0;
    let inv_vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            if v.abs() > tol {
                rank += 1;
                1.0 / v
            } else {
                0.0
            }
        })
        .collect();
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &iv) in inv_vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(iv);
    }
    (&scaled * u.transpose(), rank)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Falls back to the pseudoinverse if the factorization fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => sym_pinv(m).0,
    }
}

/// Symmetric square root of a PSD matrix. Eigenvalues slightly below zero
/// (rounding noise) are clamped; returns `Err(min_eig)` when the matrix is
/// genuinely indefinite relative to `psd_tol`.
pub fn sym_sqrt(m: &DMatrix<f64>, psd_tol: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -psd_tol {
        return Err(min_eig);
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &v) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    Ok(&scaled * u.transpose())
}

/// Smallest eigenvalue of the symmetrized copy of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// (A + Aᵀ)/2; removes float asymmetry before eigendecomposition.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm squared.
pub fn fro_norm_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Tr(A Bᵀ) for same-shaped matrices, i.e. the entrywise product sum.
pub fn trace_of_product_t(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
