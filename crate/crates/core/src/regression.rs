//! Ridge regression, minimum-norm interpolation and kernel ridge regression.

use crate::error::{OedError, Result};
use crate::linalg;
use nalgebra::DMatrix;

/// A fitted regressor. Targets may be multi-output (one column per output,
/// e.g. one-hot class indicators), in which case the coefficients are
/// matrices with one column per output.
#[derive(Debug, Clone)]
pub enum FitModel {
    /// Primal weights `ŵ_λ = (XᵀX + λI)⁺Xᵀ Y` (d × L).
    Primal { weights: DMatrix<f64>, lambda: f64 },
    /// Dual coefficients `α = (K_SS + λI)⁺ Y_S` (n × L). Predictions are
    /// `K_{x,S} α` for kernel rows against the training points.
    Dual { alpha: DMatrix<f64>, lambda: f64 },
}

impl FitModel {
    pub fn lambda(&self) -> f64 {
        match self {
            FitModel::Primal { lambda, .. } | FitModel::Dual { lambda, .. } => *lambda,
        }
    }

    /// Predicts for a block of inputs: feature rows for a primal model,
    /// kernel rows `K_{x,S}` for a dual model.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let coef = match self {
            FitModel::Primal { weights, .. } => weights,
            FitModel::Dual { alpha, .. } => alpha,
        };
        if inputs.ncols() != coef.nrows() {
            return Err(OedError::DimensionMismatch(format!(
                "prediction inputs have {} columns, model expects {}",
                inputs.ncols(),
                coef.nrows()
            )));
        }
        Ok(inputs * coef)
    }
}

/// Solves `(G + λI)⁺ rhs` with G symmetric: Cholesky for λ > 0, rank-revealing
/// pseudoinverse for λ = 0.
fn shifted_solve(g: &DMatrix<f64>, lambda: f64, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return DMatrix::zeros(0, rhs.ncols());
    }
    if lambda > 0.0 {
        let mut shifted = g.clone();
        for i in 0..n {
            shifted[(i, i)] += lambda;
        }
        match shifted.clone().cholesky() {
            Some(chol) => chol.solve(rhs),
            None => linalg::sym_pinv(&shifted).0 * rhs,
        }
    } else {
        linalg::sym_pinv(g).0 * rhs
    }
}

/// Ridge fit `ŵ_λ = (XᵀX + λI)⁺XᵀY`; at λ = 0 this is the minimum-norm
/// least-squares solution `X⁺Y`, valid in both the `n < d` and `n ≥ d`
/// regimes.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<FitModel> {
    if x.nrows() != y.nrows() {
        return Err(OedError::DimensionMismatch(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if lambda < 0.0 {
        return Err(OedError::InvalidInput("lambda must be nonnegative".into()));
    }
    let m = x.transpose() * x;
    let rhs = x.transpose() * y;
    let weights = shifted_solve(&m, lambda, &rhs);
    Ok(FitModel::Primal { weights, lambda })
}

/// Kernel ridge fit `α = (K_SS + λI)⁺ Y_S`.
pub fn krr_fit(k_ss: &DMatrix<f64>, y_s: &DMatrix<f64>, lambda: f64) -> Result<FitModel> {
    if k_ss.nrows() != k_ss.ncols() {
        return Err(OedError::InvalidInput("K_SS must be square".into()));
    }
    if k_ss.nrows() != y_s.nrows() {
        return Err(OedError::DimensionMismatch(format!(
            "K_SS is {}x{}, Y_S has {} rows",
            k_ss.nrows(),
            k_ss.ncols(),
            y_s.nrows()
        )));
    }
    if lambda < 0.0 {
        return Err(OedError::InvalidInput("lambda must be nonnegative".into()));
    }
    let alpha = shifted_solve(k_ss, lambda, y_s);
    Ok(FitModel::Dual { alpha, lambda })
}

/// Predictions `K_{x,S} α` for rows of kernel values against the training set.
pub fn krr_predict(model: &FitModel, k_rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match model {
        FitModel::Dual { .. } => model.predict(k_rows),
        FitModel::Primal { .. } => Err(OedError::InvalidInput(
            "krr_predict requires a dual model".into(),
        )),
    }
}

/// Mean squared error over test rows, averaged over rows and output
/// dimensions.
pub fn test_mse(model: &FitModel, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if inputs.nrows() == 0 {
        return Err(OedError::InvalidInput("empty test set".into()));
    }
    let pred = model.predict(inputs)?;
    if pred.shape() != targets.shape() {
        return Err(OedError::DimensionMismatch(format!(
            "predictions are {:?}, targets are {:?}",
            pred.shape(),
            targets.shape()
        )));
    }
    let err = pred - targets;
    Ok(linalg::fro_norm_sq(&err) / (targets.nrows() * targets.ncols()) as f64)
}

/// Expands integer class ids (one per row) to one-hot rows of length
/// `classes`.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(OedError::InvalidInput(format!(
            "class id {bad} out of range for {classes} classes"
        )));
    }
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn weights(model: &FitModel) -> DMatrix<f64> {
        match model {
            FitModel::Primal { weights, .. } => weights.clone(),
            FitModel::Dual { alpha, .. } => alpha.clone(),
        }
    }

    #[test]
    fn diagonal_shrinkage() {
        let x = DMatrix::identity(2, 2);
        let y = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let w = weights(&ridge_fit(&x, &y, 1.0).unwrap());
        assert_relative_eq!(w[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(w[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn minimum_norm_interpolator_single_row() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DMatrix::from_column_slice(1, 1, &[2.0]);
        let w = weights(&ridge_fit(&x, &y, 0.0).unwrap());
        assert_relative_eq!(w[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(w[(1, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn continuity_at_lambda_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = randn_matrix(&mut rng, 5, 8);
        let y = randn_matrix(&mut rng, 5, 1);
        let w0 = weights(&ridge_fit(&x, &y, 0.0).unwrap());
        let weps = weights(&ridge_fit(&x, &y, 1e-6).unwrap());
        assert!((&weps - &w0).norm() <= 1e-4 * w0.norm());
    }

    #[test]
    fn interpolation_and_minimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = randn_matrix(&mut rng, 4, 9);
        let y = randn_matrix(&mut rng, 4, 1);
        let model = ridge_fit(&x, &y, 0.0).unwrap();
        let w = weights(&model);
        let resid = &x * &w - &y;
        assert!(resid.norm() <= 1e-8 * y.norm());
        // any null-space perturbation increases the norm
        let p = x.transpose() * crate::linalg::sym_pinv(&(&x * x.transpose())).0 * &x;
        let z = randn_matrix(&mut rng, 9, 1);
        let null_dir = &z - &p * &z;
        let w_alt = &w + null_dir;
        assert!((&x * &w_alt - &y).norm() <= 1e-7 * y.norm().max(1.0));
        assert!(w.norm() <= w_alt.norm() + 1e-12);
    }

    #[test]
    fn normal_equation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randn_matrix(&mut rng, 12, 5);
        let y = randn_matrix(&mut rng, 12, 1);
        let lambda = 0.3;
        let w = weights(&ridge_fit(&x, &y, lambda).unwrap());
        let m = x.transpose() * &x;
        let lhs = (&m + DMatrix::identity(5, 5) * lambda) * &w;
        let rhs = x.transpose() * &y;
        assert!((lhs - &rhs).norm() <= 1e-7 * rhs.norm());
    }

    #[test]
    fn krr_interpolates_at_zero_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = randn_matrix(&mut rng, 6, 10);
        let k = &v * v.transpose();
        let y = randn_matrix(&mut rng, 6, 1);
        let model = krr_fit(&k, &y, 0.0).unwrap();
        let pred = krr_predict(&model, &k).unwrap();
        assert!((pred - &y).norm() <= 1e-8 * y.norm());
    }

    #[test]
    fn krr_scalar_hand_case() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let y = DMatrix::from_element(1, 1, 3.0);
        let model = krr_fit(&k, &y, 1.0).unwrap();
        assert_relative_eq!(weights(&model)[(0, 0)], 1.5, epsilon = 1e-14);
        let pred = krr_predict(&model, &k).unwrap();
        assert_relative_eq!(pred[(0, 0)], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn dual_matches_primal_for_linear_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = randn_matrix(&mut rng, 7, 4);
        let y = randn_matrix(&mut rng, 7, 2);
        let lambda = 0.6;
        let primal = ridge_fit(&x, &y, lambda).unwrap();
        let k = &x * x.transpose();
        let dual = krr_fit(&k, &y, lambda).unwrap();
        let x_test = randn_matrix(&mut rng, 5, 4);
        let p1 = primal.predict(&x_test).unwrap();
        let p2 = krr_predict(&dual, &(&x_test * x.transpose())).unwrap();
        assert!((p1 - &p2).norm() <= 1e-8 * p2.norm());
    }

    #[test]
    fn mse_of_perfect_and_zero_models() {
        let x = DMatrix::identity(3, 3);
        let y = DMatrix::from_element(3, 1, 1.0);
        let perfect = ridge_fit(&x, &y, 0.0).unwrap();
        assert_relative_eq!(test_mse(&perfect, &x, &y).unwrap(), 0.0, epsilon = 1e-20);
        let zero = FitModel::Primal {
            weights: DMatrix::zeros(3, 1),
            lambda: 0.0,
        };
        assert_relative_eq!(test_mse(&zero, &x, &y).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mse_rejects_empty_test_set() {
        let model = FitModel::Primal {
            weights: DMatrix::zeros(2, 1),
            lambda: 0.0,
        };
        let empty = DMatrix::<f64>::zeros(0, 2);
        let targets = DMatrix::<f64>::zeros(0, 1);
        assert!(test_mse(&model, &empty, &targets).is_err());
    }

    #[test]
    fn one_hot_expansion() {
        let y = one_hot(&[2, 0], 3).unwrap();
        assert_eq!(y[(0, 2)], 1.0);
        assert_eq!(y[(1, 0)], 1.0);
        assert_eq!(y.sum(), 2.0);
        assert!(one_hot(&[3], 3).is_err());
    }
}
