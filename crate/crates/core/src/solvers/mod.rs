//! Least-squares engines. Every penalized solver shares the cyclic
//! coordinate-descent kernel in [`lasso`], including per-coordinate sign
//! restrictions.

mod lasso;
mod omp;
mod path;
mod sqrt_lasso;

use nalgebra::{DMatrix, DVector};

pub use lasso::{kkt_violation, lasso, lasso_objective, CoordinateDescent, LassoConfig, SignConstraints};
pub use omp::omp;
pub use path::{lasso_path, lasso_path_until, EntryPath, PathConfig, PathStop};
pub use sqrt_lasso::{
    sqrt_lasso, sqrt_lasso_at, sqrt_lasso_lambda, sqrt_lasso_lambda_with, LambdaRule,
    SqrtLassoConfig,
};

use crate::error::Result;

/// Ordinary least squares `(XᵀX)⁻¹Xᵀy`, via QR.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    crate::linalg::qr_least_squares(x, y)
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}
