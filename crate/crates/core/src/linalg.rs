//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::normal_matrix;

/// Relative pivot size below which a triangular factor is treated as singular.
pub const RANK_TOL: f64 = 1e-10;

pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    symmetrize(sym)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Factor `C` with `CᵀC = a` for a symmetric PSD `a`, using the
/// eigendecomposition `a = V Λ Vᵀ` and `C = Λ^{1/2} Vᵀ`. Eigenvalues in
/// `[-neg_tol, 0)` are clamped to zero; anything more negative is reported.
pub fn psd_factor(a: &DMatrix<f64>, neg_tol: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -neg_tol {
        return Err(min);
    }
    let k = a.nrows();
    let mut c = eig.eigenvectors.transpose();
    for i in 0..k {
        let root = eig.eigenvalues[i].max(0.0).sqrt();
        c.row_mut(i).scale_mut(root);
    }
    Ok(c)
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Least squares by Householder QR with a rank check on the diagonal of R.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "response has {} entries, design has {} rows",
            y.len(),
            n
        )));
    }
    if n < p {
        return Err(Error::Singular(format!("{n} rows cannot determine {p} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    for i in 0..p {
        if r[(i, i)].abs() <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("design is rank deficient at column {i}")));
        }
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))
}

/// `n × k` orthonormal columns orthogonal to the column span of `x`, from the
/// QR factorization of `[x | G]` with a seeded Gaussian block `G`.
pub fn orthonormal_complement<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    k: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n < p + k {
        return Err(Error::Dimension(format!(
            "need at least {} rows for a {k}-column complement of {p} columns, have {n}",
            p + k
        )));
    }
    let g = normal_matrix(rng, n, k);
    let mut aug = DMatrix::zeros(n, p + k);
    aug.columns_mut(0, p).copy_from(x);
    aug.columns_mut(p, k).copy_from(&g);
    let qr = aug.qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    for i in 0..p {
        if r[(i, i)].abs() <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("design is rank deficient at column {i}")));
        }
    }
    Ok(qr.q().columns(p, k).into_owned())
}

/// Orthonormalize a square Gaussian matrix. Signs are fixed so that R has a
/// positive diagonal, which makes the result Haar distributed.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = normal_matrix(rng, n, n);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn psd_factor_reproduces_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = psd_factor(&a, 1e-10).unwrap();
        assert!(max_abs(&(c.tr_mul(&c) - &a)) < 1e-12);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = psd_factor(&a, 1e-10).unwrap_err();
        assert!((err + 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal_to_span() {
        let mut rng = rng_from(3);
        let x = normal_matrix(&mut rng, 12, 4);
        let u = orthonormal_complement(&x, 4, &mut rng).unwrap();
        assert!(max_abs(&u.tr_mul(&x)) < 1e-12);
        assert!(max_abs(&(u.tr_mul(&u) - DMatrix::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(qr_least_squares(&x, &y), Err(Error::Singular(_))));
    }
}
