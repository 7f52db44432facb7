//! Fixed-design knockoff construction.
//!
//! A knockoff matrix `X̃` matches the Gram structure of `X`:
//! `X̃ᵀX̃ = Σ` and `XᵀX̃ = Σ − diag(s)` with `Σ = XᵀX`. We build
//! `X̃ = X(I − Σ⁻¹ diag s) + Ũ C`, where `Ũ` spans directions orthogonal to
//! the columns of `X` and `CᵀC = 2 diag s − diag s Σ⁻¹ diag s`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gram, min_eigenvalue, orthonormal_complement, psd_factor, spd_inverse};
use crate::model::{normalize_columns, Design};
use crate::rng::rng_from;

/// Eigenvalue slack allowed when checking positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Below this (relative to the squared column norm) `s_j` counts as zero and
/// the feature is indistinguishable from its knockoff.
pub const S_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct KnockoffPair {
    x: Design,
    x_tilde: Design,
    s: Vec<f64>,
    gram: DMatrix<f64>,
}

impl KnockoffPair {
    /// Assemble a pair from matrices built elsewhere (e.g. by recycling).
    /// Only shapes are checked; use [`KnockoffPair::gram_residuals`] to
    /// confirm the Gram identities.
    pub fn from_parts(x: Design, x_tilde: Design, s: Vec<f64>) -> Result<Self> {
        if x.values().shape() != x_tilde.values().shape() || s.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "pair shapes {:?} / {:?} with {} s values",
                x.values().shape(),
                x_tilde.values().shape(),
                s.len()
            )));
        }
        let gram = target_gram(&gram(x.values()), &s);
        Ok(Self { x, x_tilde, s, gram })
    }

    pub fn x(&self) -> &Design {
        &self.x
    }

    pub fn x_tilde(&self) -> &Design {
        &self.x_tilde
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// The `2p × 2p` target Gram matrix `[[Σ, Σ − D], [Σ − D, Σ]]`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn p(&self) -> usize {
        self.s.len()
    }

    /// Features whose knockoff coincides with the original column.
    pub fn is_degenerate(&self, j: usize) -> bool {
        let norm = self.x.column_norms()[j];
        self.s[j] < S_ZERO_TOL * (norm * norm).max(f64::MIN_POSITIVE)
    }

    /// `[X X̃]` as one `n × 2p` matrix.
    pub fn augmented(&self) -> DMatrix<f64> {
        augment(self.x.values(), self.x_tilde.values())
    }

    /// Residuals of the four Gram identities, computed from the stored matrices.
    pub fn gram_residuals(&self) -> [f64; 4] {
        let x = self.x.values();
        let xt = self.x_tilde.values();
        let p = self.p();
        let sigma = self.gram.view((0, 0), (p, p));
        let cross = self.gram.view((0, p), (p, p));
        let r1 = crate::linalg::max_abs(&(xt.tr_mul(xt) - sigma));
        let r2 = crate::linalg::max_abs(&(x.tr_mul(xt) - cross));
        let d = x - xt;
        let two_s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            p,
            self.s.iter().map(|v| 2.0 * v),
        ));
        let r3 = crate::linalg::max_abs(&(d.tr_mul(&d) - two_s));
        let r4 = crate::linalg::max_abs(&d.tr_mul(&(x + xt)));
        [r1, r2, r3, r4]
    }
}

pub fn augment(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut aug = DMatrix::zeros(n, 2 * p);
    aug.columns_mut(0, p).copy_from(x);
    aug.columns_mut(p, p).copy_from(x_tilde);
    aug
}

fn target_gram(sigma: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let p = s.len();
    let mut cross = sigma.clone();
    for (j, sj) in s.iter().enumerate() {
        cross[(j, j)] -= sj;
    }
    let mut g = DMatrix::zeros(2 * p, 2 * p);
    g.view_mut((0, 0), (p, p)).copy_from(sigma);
    g.view_mut((p, p), (p, p)).copy_from(sigma);
    g.view_mut((0, p), (p, p)).copy_from(&cross);
    g.view_mut((p, 0), (p, p)).copy_from(&cross);
    g
}

/// Equicorrelated choice `s_j = min(2 λ_min(Σ), 1)` for a unit-diagonal Gram.
pub fn equicorrelated_s(gram_p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = gram_p.nrows();
    if gram_p.ncols() != p || p == 0 {
        return Err(Error::Dimension(format!(
            "Gram matrix must be square and non-empty, got {}x{}",
            gram_p.nrows(),
            gram_p.ncols()
        )));
    }
    if let Some(j) = (0..p).find(|&j| (gram_p[(j, j)] - 1.0).abs() > 1e-8) {
        return Err(Error::DegenerateDesign(format!(
            "Gram matrix must have unit diagonal (entry {j} is {})",
            gram_p[(j, j)]
        )));
    }
    let lambda_min = min_eigenvalue(gram_p);
    if lambda_min <= 0.0 {
        return Err(Error::DegenerateDesign(format!(
            "Gram matrix is not positive definite (smallest eigenvalue {lambda_min:e})"
        )));
    }
    Ok(vec![(2.0 * lambda_min).min(1.0); p])
}

/// Build knockoffs for a column-normalized design with `n >= 2p`. The
/// orthogonal complement `Ũ` is drawn from `seed`.
pub fn construct_knockoffs(x: &Design, s: &[f64], seed: u64) -> Result<KnockoffPair> {
    let (n, p) = (x.nrows(), x.ncols());
    if s.len() != p {
        return Err(Error::Dimension(format!("s has {} entries for {p} features", s.len())));
    }
    if let Some(j) = x
        .values()
        .column_iter()
        .position(|c| (c.norm() - 1.0).abs() > 1e-8)
    {
        return Err(Error::DegenerateDesign(format!(
            "knockoff construction needs unit-norm columns (column {j} is not)"
        )));
    }
    if n < 2 * p {
        return Err(Error::Dimension(format!(
            "knockoff construction needs n >= 2p, got n = {n}, p = {p}; screen features first"
        )));
    }
    if let Some(v) = s.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("s must be finite and nonnegative, got {v}")));
    }
    let xv = x.values();
    let sigma = gram(xv);
    let sigma_inv = spd_inverse(&sigma)
        .map_err(|_| Error::DegenerateDesign("XᵀX is not invertible".into()))?;

    // sigma_inv_d = Σ⁻¹ diag(s)
    let mut sigma_inv_d = sigma_inv.clone();
    for (j, &sj) in s.iter().enumerate() {
        sigma_inv_d.column_mut(j).scale_mut(sj);
    }
    let mut a = -(sigma_inv_d.clone());
    for (i, &si) in s.iter().enumerate() {
        a.row_mut(i).scale_mut(si);
        a[(i, i)] += 2.0 * si;
    }
    let c = psd_factor(&a, PSD_TOL).map_err(|min_eigenvalue| Error::InvalidS { min_eigenvalue })?;

    let mut rng = rng_from(seed);
    let u = orthonormal_complement(xv, p, &mut rng)?;
    let x_tilde = xv - xv * &sigma_inv_d + u * c;

    Ok(KnockoffPair {
        gram: target_gram(&sigma, s),
        x: x.clone(),
        x_tilde: Design::new(x_tilde)?,
        s: s.to_vec(),
    })
}

/// Knockoffs for a design with arbitrary column scales: normalize, build
/// equicorrelated knockoffs, then scale both back. The returned `s` is in the
/// original units (`s_j · ‖X_j‖²`).
pub fn construct_knockoffs_rescaled(x: &Design, seed: u64) -> Result<KnockoffPair> {
    let normalized = normalize_columns(x)?;
    let s = equicorrelated_s(&gram(normalized.values()))?;
    let pair = construct_knockoffs(&normalized, &s, seed)?;
    let norms = normalized.column_norms();
    let mut x_tilde = pair.x_tilde.into_values();
    for (j, mut col) in x_tilde.column_iter_mut().enumerate() {
        col *= norms[j];
    }
    let s_scaled: Vec<f64> = s.iter().zip(norms).map(|(sj, c)| sj * c * c).collect();
    let sigma = gram(x.values());
    Ok(KnockoffPair {
        gram: target_gram(&sigma, &s_scaled),
        x: x.clone(),
        x_tilde: Design::new(x_tilde)?,
        s: s_scaled,
    })
}

/// Stack the first `n0` original rows over the part-1 knockoffs, so the
/// knockoffs are exact copies on the screening rows.
pub fn recycle_knockoffs(
    x_full_screened: &Design,
    x_tilde_part1: &Design,
    n0: usize,
) -> Result<Design> {
    let n = x_full_screened.nrows();
    let n1 = x_tilde_part1.nrows();
    let k = x_full_screened.ncols();
    if n0 + n1 != n || x_tilde_part1.ncols() != k {
        return Err(Error::Dimension(format!(
            "cannot recycle: {n0} + {n1} rows for an {n}-row design, {} vs {k} columns",
            x_tilde_part1.ncols()
        )));
    }
    let mut out = DMatrix::zeros(n, k);
    out.rows_mut(0, n0)
        .copy_from(&x_full_screened.values().rows(0, n0));
    out.rows_mut(n0, n1).copy_from(x_tilde_part1.values());
    Design::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_matrix;

    fn random_normalized(n: usize, p: usize, seed: u64) -> Design {
        normalize_columns(&Design::new(normal_matrix(&mut rng_from(seed), n, p)).unwrap()).unwrap()
    }

    #[test]
    fn identity_gram_gives_unit_s() {
        assert_eq!(equicorrelated_s(&DMatrix::identity(4, 4)).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn two_by_two_grams() {
        // eigenvalues of [[1, r], [r, 1]] are 1 ± r
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let eig: f64 = g.clone().symmetric_eigen().eigenvalues.min();
        assert!((eig - 0.5).abs() < 1e-12);
        let s = equicorrelated_s(&g).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);

        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let s = equicorrelated_s(&g).unwrap();
        assert!((s[0] - 0.2).abs() < 1e-12 && (s[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn singular_gram_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(equicorrelated_s(&g), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn zero_s_copies_design() {
        let x = random_normalized(10, 3, 4);
        let pair = construct_knockoffs(&x, &[0.0; 3], 1).unwrap();
        assert_eq!(pair.x_tilde().values(), x.values());
        assert!(pair.gram_residuals().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn orthonormal_design_gets_orthogonal_knockoffs() {
        let mut x = DMatrix::zeros(6, 2);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        let x = normalize_columns(&Design::new(x).unwrap()).unwrap();
        let pair = construct_knockoffs(&x, &[1.0, 1.0], 9).unwrap();
        let cross = pair.x_tilde().values().tr_mul(x.values());
        assert!(crate::linalg::max_abs(&cross) < 1e-8);
    }

    #[test]
    fn random_design_satisfies_gram_identities() {
        let x = random_normalized(50, 10, 11);
        let s = equicorrelated_s(&gram(x.values())).unwrap();
        let pair = construct_knockoffs(&x, &s, 5).unwrap();
        for r in pair.gram_residuals() {
            assert!(r <= 1e-8, "residual {r}");
        }
    }

    #[test]
    fn rescaled_construction_satisfies_gram_identities() {
        let mut raw = normal_matrix(&mut rng_from(2), 40, 8);
        for (j, mut c) in raw.column_iter_mut().enumerate() {
            c *= 0.3 + j as f64;
        }
        let pair = construct_knockoffs_rescaled(&Design::new(raw).unwrap(), 3).unwrap();
        for r in pair.gram_residuals() {
            assert!(r <= 1e-8, "residual {r}");
        }
    }

    #[test]
    fn construction_is_deterministic_in_seed() {
        let x = random_normalized(30, 5, 8);
        let s = equicorrelated_s(&gram(x.values())).unwrap();
        let a = construct_knockoffs(&x, &s, 42).unwrap();
        let b = construct_knockoffs(&x, &s, 42).unwrap();
        let c = construct_knockoffs(&x, &s, 43).unwrap();
        assert_eq!(a.x_tilde().values(), b.x_tilde().values());
        assert_ne!(a.x_tilde().values(), c.x_tilde().values());
    }

    #[test]
    fn too_few_rows_is_a_dimension_error() {
        let x = random_normalized(9, 5, 1);
        assert!(matches!(construct_knockoffs(&x, &[0.1; 5], 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn oversized_s_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let chol = g.cholesky().unwrap();
        let x = normalize_columns(
            &Design::new({
                let mut m = DMatrix::zeros(6, 2);
                m.view_mut((0, 0), (2, 2)).copy_from(&chol.l().transpose());
                m
            })
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(construct_knockoffs(&x, &[1.0, 1.0], 0), Err(Error::InvalidS { .. })));
    }

    #[test]
    fn recycling_stacks_rows() {
        let full = Design::new(DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let tilde = Design::new(DMatrix::from_column_slice(2, 1, &[-3.0, -4.0])).unwrap();
        let out = recycle_knockoffs(&full, &tilde, 2).unwrap();
        assert_eq!(out.values().as_slice(), &[1.0, 2.0, -3.0, -4.0]);

        let zero = recycle_knockoffs(&tilde, &tilde, 0).unwrap();
        assert_eq!(zero.values(), tilde.values());
        assert!(recycle_knockoffs(&full, &tilde, 1).is_err());
    }
}
