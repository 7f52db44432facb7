//! Row splitting (plain or after a random rotation), marginal pre-screening
//! and Lasso-path screening with entry signs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::model::{Design, Response, SplitData};
use crate::rng::rng_from;
use crate::solvers::{lasso_path_until, PathConfig, PathStop};

/// Screened feature set in entry order, with the sign each feature had when
/// it first entered the path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    /// Original feature indices, in order of entry.
    pub s0: Vec<usize>,
    /// Entry signs aligned with `s0`.
    pub signs0: Vec<i8>,
    pub k_max: usize,
}

impl ScreenResult {
    pub fn len(&self) -> usize {
        self.s0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s0.is_empty()
    }

    pub fn signs_map(&self) -> BTreeMap<usize, i8> {
        self.s0.iter().copied().zip(self.signs0.iter().copied()).collect()
    }

    /// Keep only the first `k` entries.
    pub fn truncate(&mut self, k: usize) {
        self.s0.truncate(k);
        self.signs0.truncate(k);
    }

    /// Whether `s0` contains every index of `support`.
    pub fn covers(&self, support: &[usize]) -> bool {
        support.iter().all(|j| self.s0.contains(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationSplit {
    pub u: DMatrix<f64>,
    pub n0: usize,
}

fn check_n0(n: usize, n0: usize) -> Result<()> {
    if n0 == 0 || n0 >= n {
        return Err(Error::Config(format!("n0 = {n0} must satisfy 1 <= n0 < n = {n}")));
    }
    Ok(())
}

fn take_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn split_at(x: &DMatrix<f64>, y: &DVector<f64>, part0: &[usize], part1: &[usize]) -> Result<SplitData> {
    Ok(SplitData {
        x0: Design::new(take_rows(x, part0))?,
        y0: Response::new(DVector::from_iterator(part0.len(), part0.iter().map(|&i| y[i])))?,
        x1: Design::new(take_rows(x, part1))?,
        y1: Response::new(DVector::from_iterator(part1.len(), part1.iter().map(|&i| y[i])))?,
    })
}

/// Seeded uniform partition of the rows into sizes `n0` and `n − n0`.
/// Row order within each part follows the original order.
pub fn split_indices(n: usize, n0: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_n0(n, n0)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(seed));
    let mut part0 = perm[..n0].to_vec();
    let mut part1 = perm[n0..].to_vec();
    part0.sort_unstable();
    part1.sort_unstable();
    Ok((part0, part1))
}

pub fn split_rows(x: &Design, y: &Response, n0: usize, seed: u64) -> Result<SplitData> {
    y.check_matches(x)?;
    let (part0, part1) = split_indices(x.nrows(), n0, seed)?;
    split_at(x.values(), y.values(), &part0, &part1)
}

pub fn random_rotation(n: usize, seed: u64) -> RotationSplit {
    RotationSplit {
        u: random_orthogonal(n, &mut rng_from(seed)),
        n0: 0,
    }
}

/// Apply one rotation `U` to both `X` and `y`, then split by leading rows.
pub fn rotate_then_split(x: &Design, y: &Response, n0: usize, seed: u64) -> Result<SplitData> {
    y.check_matches(x)?;
    let n = x.nrows();
    check_n0(n, n0)?;
    let u = random_rotation(n, seed).u;
    split_by_rotation(x, y, &RotationSplit { u, n0 })
}

pub fn split_by_rotation(x: &Design, y: &Response, rot: &RotationSplit) -> Result<SplitData> {
    let n = x.nrows();
    check_n0(n, rot.n0)?;
    if rot.u.shape() != (n, n) {
        return Err(Error::Dimension(format!("rotation is {:?}, need {n}x{n}", rot.u.shape())));
    }
    let xr = &rot.u * x.values();
    let yr = &rot.u * y.values();
    let part0: Vec<usize> = (0..rot.n0).collect();
    let part1: Vec<usize> = (rot.n0..n).collect();
    split_at(&xr, &yr, &part0, &part1)
}

/// The `m` features with the largest `|X_jᵀ y0|`, best first; ties go to the
/// lower index.
pub fn marginal_prescreen(x0: &Design, y0: &Response, m: usize) -> Result<Vec<usize>> {
    y0.check_matches(x0)?;
    let p = x0.ncols();
    if m == 0 || m > p {
        return Err(Error::Config(format!("prescreen size {m} must lie in 1..={p}")));
    }
    let corr = x0.values().tr_mul(y0.values());
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
    idx.truncate(m);
    Ok(idx)
}

/// First `k_max` features to enter the Lasso path on `(x0, y0)`.
pub fn lasso_screen(x0: &Design, y0: &Response, k_max: usize, cfg: &PathConfig) -> Result<ScreenResult> {
    y0.check_matches(x0)?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let path = lasso_path_until(x0.values(), y0.values(), cfg, None, PathStop::AfterEntries(k_max))?;
    let s0: Vec<usize> = path.entry_order.iter().copied().take(k_max).collect();
    let signs0 = s0.iter().map(|&j| path.entry_sign[j]).collect();
    Ok(ScreenResult { s0, signs0, k_max })
}

/// [`lasso_screen`] restricted to `candidates`, reported in original indices.
pub fn lasso_screen_subset(
    x0: &Design,
    y0: &Response,
    candidates: &[usize],
    k_max: usize,
    cfg: &PathConfig,
) -> Result<ScreenResult> {
    let sub = x0.select_columns(candidates);
    let mut r = lasso_screen(&sub, y0, k_max, cfg)?;
    for j in r.s0.iter_mut() {
        *j = candidates[*j];
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram, max_abs};
    use crate::rng::{normal_matrix, normal_vector};
    use crate::solvers::least_squares;
    use proptest::prelude::*;

    fn data(n: usize, p: usize, seed: u64) -> (Design, Response) {
        let mut rng = rng_from(seed);
        let x = Design::new(normal_matrix(&mut rng, n, p)).unwrap();
        let y = Response::new(normal_vector(&mut rng, n)).unwrap();
        (x, y)
    }

    #[test]
    fn split_leaves_one_row() {
        let (x, y) = data(10, 3, 1);
        let s = split_rows(&x, &y, 9, 4).unwrap();
        assert_eq!((s.n0(), s.n1()), (9, 1));
        assert!(split_rows(&x, &y, 0, 4).is_err());
        assert!(split_rows(&x, &y, 10, 4).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let (x, y) = data(20, 3, 1);
        assert_eq!(split_rows(&x, &y, 7, 9).unwrap(), split_rows(&x, &y, 7, 9).unwrap());
        assert_ne!(split_indices(20, 7, 9).unwrap(), split_indices(20, 7, 10).unwrap());
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 2usize..60, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let n0 = 1 + ((n - 1) as f64 * frac) as usize % (n - 1);
            let (a, b) = split_indices(n, n0, seed).unwrap();
            prop_assert_eq!(a.len(), n0);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rotation_is_orthonormal_isometry() {
        for n in [1usize, 2, 7, 40] {
            let u = random_rotation(n, 3).u;
            let err = max_abs(&(u.transpose() * &u - DMatrix::identity(n, n)));
            assert!(err < 1e-8);
            let y = normal_vector(&mut rng_from(5), n);
            assert!(((&u * &y).norm() - y.norm()).abs() < 1e-8);
        }
        let u1 = random_rotation(1, 8).u;
        assert!((u1[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_rotation_splits_by_leading_rows() {
        let (x, y) = data(12, 3, 2);
        let rot = RotationSplit { u: DMatrix::identity(12, 12), n0: 5 };
        let s = split_by_rotation(&x, &y, &rot).unwrap();
        assert_eq!(s.x0.values(), &x.values().rows(0, 5).clone_owned());
        assert_eq!(s.y1.values(), &y.values().rows(5, 7).clone_owned());
    }

    #[test]
    fn rotation_preserves_gram_norm_and_least_squares() {
        let (x, y) = data(30, 4, 3);
        let s = rotate_then_split(&x, &y, 10, 11).unwrap();
        let xr = s.x0.values().clone().insert_rows(10, 20, 0.0);
        let mut xr = xr;
        xr.rows_mut(10, 20).copy_from(s.x1.values());
        let mut yr = DVector::zeros(30);
        yr.rows_mut(0, 10).copy_from(s.y0.values());
        yr.rows_mut(10, 20).copy_from(s.y1.values());
        assert!(max_abs(&(gram(&xr) - gram(x.values()))) < 1e-8);
        assert!((yr.norm() - y.values().norm()).abs() < 1e-8);
        let b0 = least_squares(x.values(), y.values()).unwrap();
        let b1 = least_squares(&xr, &yr).unwrap();
        assert!((b0 - b1).amax() < 1e-8);
    }

    #[test]
    fn prescreen_orders_by_correlation() {
        let q = normal_matrix(&mut rng_from(1), 20, 5).qr().q();
        let x = Design::new(q.clone()).unwrap();
        let y = Response::new(q.column(1).clone_owned()).unwrap();
        assert_eq!(marginal_prescreen(&x, &y, 1).unwrap(), vec![1]);
        let all = marginal_prescreen(&x, &y, 5).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..5).collect::<Vec<_>>());
        assert!(marginal_prescreen(&x, &y, 0).is_err());
        assert!(marginal_prescreen(&x, &y, 6).is_err());
    }

    #[test]
    fn prescreen_matches_sort_oracle() {
        let (x, y) = data(25, 30, 4);
        let got = marginal_prescreen(&x, &y, 10).unwrap();
        let mut scored: Vec<(f64, usize)> = (0..30)
            .map(|j| (x.values().column(j).dot(y.values()).abs(), j))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let want: Vec<usize> = scored.iter().take(10).map(|t| t.1).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn prescreen_ties_go_to_lower_index() {
        let x = Design::new(DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        let y = Response::from_vec(vec![1.0, 1.0]).unwrap();
        assert_eq!(marginal_prescreen(&x, &y, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn strong_signal_survives_screen_with_sign() {
        let cfg = PathConfig::default();
        for seed in 0..50 {
            let mut rng = rng_from(100 + seed);
            let x = Design::new(normal_matrix(&mut rng, 40, 60) / 40f64.sqrt()).unwrap();
            let mut mu = x.values().column(0) * 5.0;
            mu += normal_vector(&mut rng, 40) * 0.5;
            let y = Response::new(mu).unwrap();
            let r = lasso_screen(&x, &y, 10, &cfg).unwrap();
            let pos = r.s0.iter().position(|&j| j == 0).expect("signal screened out");
            assert_eq!(r.signs0[pos], 1);
        }
    }

    #[test]
    fn large_k_max_returns_every_active_feature() {
        let (x, y) = data(30, 8, 6);
        let r = lasso_screen(&x, &y, 100, &PathConfig::default()).unwrap();
        assert!(r.len() <= 8);
        assert_eq!(r.signs0.len(), r.len());
        let mut s = r.s0.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), r.len());
    }

    #[test]
    fn screen_size_is_capped() {
        let (x, y) = data(30, 40, 7);
        let r = lasso_screen(&x, &y, 5, &PathConfig::default()).unwrap();
        assert_eq!(r.len(), 5);
        let mut trunc = r.clone();
        trunc.truncate(2);
        assert_eq!(trunc.s0, r.s0[..2].to_vec());
    }

    #[test]
    fn subset_screen_reports_original_indices() {
        let (x, y) = data(30, 10, 8);
        let cand = vec![9, 4, 2];
        let r = lasso_screen_subset(&x, &y, &cand, 3, &PathConfig::default()).unwrap();
        assert!(r.s0.iter().all(|j| cand.contains(j)));
    }
}
