use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::qr_least_squares;

/// Orthogonal matching pursuit: repeatedly add the unselected column with the
/// largest `|X_jᵀr|` and refit least squares on the selection. Stops early if
/// the residual vanishes. Returns the selection order.
pub fn omp(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("response has {} entries, design has {n} rows", y.len())));
    }
    if k == 0 || k > p {
        return Err(Error::Config(format!("OMP needs 1 <= k <= {p}, got {k}")));
    }
    let y_norm = y.norm();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut chosen = vec![false; p];
    let mut resid = y.clone();
    while selected.len() < k {
        let corr = x.tr_mul(&resid);
        let Some((best, value)) = (0..p)
            .filter(|&j| !chosen[j])
            .map(|j| (j, corr[j].abs()))
            .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            })
        else {
            break;
        };
        if value <= 1e-12 * y_norm.max(f64::MIN_POSITIVE) {
            break;
        }
        chosen[best] = true;
        selected.push(best);
        let xs = x.select_columns(selected.iter());
        let coef = qr_least_squares(&xs, y)?;
        resid = y - xs * coef;
    }
    Ok(selected)
}
