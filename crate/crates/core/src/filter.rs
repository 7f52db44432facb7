//! Knockoff statistics `W`, data-dependent thresholds, selection and sign
//! estimates.
//!
//! Every statistic here is computed from the augmented design `[X X̃]` and is
//! antisymmetric: swapping `X_j` with `X̃_j` flips the sign of `W_j` only.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoffs::{augment, KnockoffPair};
use crate::solvers::{
    lasso, lasso_path_until, omp, sqrt_lasso, EntryPath, LassoConfig, PathConfig, PathStop,
    SignConstraints, SqrtLassoConfig,
};

/// Which statistic produced a [`StatVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatRule {
    LassoEntry,
    CoefDiff,
    SqrtLassoCoefDiff,
    OmpEntry,
}

impl StatRule {
    pub fn tag(self) -> &'static str {
        match self {
            StatRule::LassoEntry => "lasso-entry",
            StatRule::CoefDiff => "coef-diff",
            StatRule::SqrtLassoCoefDiff => "sqrt-lasso-coef-diff",
            StatRule::OmpEntry => "omp-entry",
        }
    }
}

impl fmt::Display for StatRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatVector {
    pub w: Vec<f64>,
    pub rule: StatRule,
}

impl StatVector {
    pub fn new(w: Vec<f64>, rule: StatRule) -> Result<Self> {
        if let Some(j) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateFit(format!("statistic {j} is not finite")));
        }
        Ok(Self { w, rule })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// A statistic together with the solver settings it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    /// Signed first-entry penalty along the Lasso path.
    LassoEntry(PathConfig),
    /// `|β̂_j| − |β̃_j|` from a Lasso fit at a fixed penalty.
    CoefDiff(LassoConfig),
    /// `|β̂_j| − |β̃_j|` from a square-root Lasso fit.
    SqrtLassoCoefDiff(SqrtLassoConfig),
    /// Signed reverse entry step of orthogonal matching pursuit.
    OmpEntry,
}

impl Statistic {
    pub fn rule(&self) -> StatRule {
        match self {
            Statistic::LassoEntry(_) => StatRule::LassoEntry,
            Statistic::CoefDiff(_) => StatRule::CoefDiff,
            Statistic::SqrtLassoCoefDiff(_) => StatRule::SqrtLassoCoefDiff,
            Statistic::OmpEntry => StatRule::OmpEntry,
        }
    }

    /// Compute `W` on `[x x_tilde]`. With `signs`, the fit is restricted so
    /// that feature `j` and its knockoff may only take sign `signs[j]`.
    pub fn compute(
        &self,
        x: &DMatrix<f64>,
        x_tilde: &DMatrix<f64>,
        y: &DVector<f64>,
        signs: Option<&[i8]>,
        seed: u64,
    ) -> Result<StatVector> {
        if x.shape() != x_tilde.shape() {
            return Err(Error::Dimension("feature and knockoff matrices differ in shape".into()));
        }
        let m = x.ncols();
        let aug = augment(x, x_tilde);
        let constraints = signs.map(SignConstraints::paired).transpose()?;
        match self {
            Statistic::LassoEntry(cfg) => {
                let path =
                    lasso_path_until(&aug, y, cfg, constraints.as_ref(), PathStop::AllPairsEntered)?;
                stat_lasso_entry(&path)
            }
            Statistic::CoefDiff(cfg) => {
                let b = lasso(&aug, y, cfg, constraints.as_ref())?;
                stat_coef_diff(&b.as_slice()[..m], &b.as_slice()[m..])
            }
            Statistic::SqrtLassoCoefDiff(cfg) => {
                let b = sqrt_lasso(&aug, y, cfg, constraints.as_ref(), seed)?;
                let mut w = stat_coef_diff(&b.as_slice()[..m], &b.as_slice()[m..])?;
                w.rule = StatRule::SqrtLassoCoefDiff;
                Ok(w)
            }
            Statistic::OmpEntry => {
                if signs.is_some() {
                    return Err(Error::Config("OMP statistic does not support sign restrictions".into()));
                }
                let order = omp(&aug, y, m.max(1))?;
                stat_omp_entry(&order, 2 * m)
            }
        }
    }

    /// [`Statistic::compute`] on a knockoff pair, with `W_j = 0` forced for
    /// features whose knockoff is an exact copy.
    pub fn compute_for_pair(
        &self,
        pair: &KnockoffPair,
        y: &DVector<f64>,
        signs: Option<&[i8]>,
        seed: u64,
    ) -> Result<StatVector> {
        let mut w = self.compute(pair.x().values(), pair.x_tilde().values(), y, signs, seed)?;
        for j in 0..pair.p() {
            if pair.is_degenerate(j) {
                w.w[j] = 0.0;
            }
        }
        Ok(w)
    }
}

/// `W_j = max(λ_j, λ̃_j)`, signed `+` when the feature enters strictly first,
/// `−` when its knockoff does, and 0 on ties or when neither enters.
pub fn stat_lasso_entry(path: &EntryPath) -> Result<StatVector> {
    let total = path.len();
    if !total.is_multiple_of(2) {
        return Err(Error::Pairing(total));
    }
    let m = total / 2;
    let w = (0..m)
        .map(|j| {
            let (a, b) = (path.entry_lambda[j], path.entry_lambda[j + m]);
            if a > b {
                a
            } else if b > a {
                -b
            } else {
                0.0
            }
        })
        .collect();
    StatVector::new(w, StatRule::LassoEntry)
}

pub fn stat_coef_diff(beta_hat: &[f64], beta_tilde: &[f64]) -> Result<StatVector> {
    if beta_hat.len() != beta_tilde.len() {
        return Err(Error::Dimension(format!(
            "{} feature coefficients vs {} knockoff coefficients",
            beta_hat.len(),
            beta_tilde.len()
        )));
    }
    let w = beta_hat
        .iter()
        .zip(beta_tilde)
        .map(|(a, b)| a.abs() - b.abs())
        .collect();
    StatVector::new(w, StatRule::CoefDiff)
}

/// Entry order over `total = 2m` augmented coordinates; a coordinate entering
/// at step `t` scores `total − t`.
pub fn stat_omp_entry(order: &[usize], total: usize) -> Result<StatVector> {
    if !total.is_multiple_of(2) {
        return Err(Error::Pairing(total));
    }
    let m = total / 2;
    let mut score = vec![0.0; total];
    for (t, &j) in order.iter().enumerate() {
        score[j] = (total - t) as f64;
    }
    let w = (0..m)
        .map(|j| {
            let (a, b) = (score[j], score[j + m]);
            if a > b {
                a
            } else if b > a {
                -b
            } else {
                0.0
            }
        })
        .collect();
    StatVector::new(w, StatRule::OmpEntry)
}

/// Smallest `t` among the nonzero `|W_j|` with estimated FDP
/// `(plus + #{W_j <= −t}) / #{W_j >= t}` at most `q`; `+∞` if none.
pub fn knockoff_threshold(w: &StatVector, q: f64, plus: bool) -> f64 {
    let mut positives: Vec<f64> = w.w.iter().copied().filter(|v| *v > 0.0).collect();
    let mut negatives: Vec<f64> = w.w.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    positives.sort_by(f64::total_cmp);
    negatives.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = positives.iter().chain(&negatives).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let offset = if plus { 1.0 } else { 0.0 };
    for t in candidates {
        let n_pos = positives.len() - positives.partition_point(|v| *v < t);
        let n_neg = negatives.len() - negatives.partition_point(|v| *v < t);
        let ratio = (offset + n_neg as f64) / (n_pos.max(1) as f64);
        if ratio <= q {
            return t;
        }
    }
    f64::INFINITY
}

pub fn select(w: &StatVector, threshold: f64) -> Vec<usize> {
    if threshold.is_infinite() {
        return Vec::new();
    }
    (0..w.len()).filter(|&j| w.w[j] >= threshold).collect()
}

/// `sign((X_j − X̃_j)ᵀ y)` for each selected feature; exact zeros map to `+1`.
pub fn estimate_signs(
    pair: &KnockoffPair,
    y: &DVector<f64>,
    selected: &[usize],
) -> BTreeMap<usize, i8> {
    let x = pair.x().values();
    let xt = pair.x_tilde().values();
    selected
        .iter()
        .map(|&j| {
            let v = (x.column(j) - xt.column(j)).dot(y);
            (j, if v < 0.0 { -1 } else { 1 })
        })
        .collect()
}

/// Selected set `Ŝ`, its estimated signs and the threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub signs: BTreeMap<usize, i8>,
    pub threshold: f64,
    pub plus: bool,
    pub q: f64,
}

impl SelectionResult {
    pub fn empty(q: f64, plus: bool) -> Self {
        Self {
            selected: Vec::new(),
            signs: BTreeMap::new(),
            threshold: f64::INFINITY,
            plus,
            q,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Re-index through `map` (e.g. screened position → original feature).
    pub fn remap(self, map: &[usize]) -> Self {
        let mut selected: Vec<usize> = self.selected.iter().map(|&j| map[j]).collect();
        selected.sort_unstable();
        Self {
            selected,
            signs: self.signs.into_iter().map(|(j, s)| (map[j], s)).collect(),
            ..self
        }
    }
}

/// Threshold, select and attach sign estimates.
pub fn apply_filter(
    w: &StatVector,
    pair: &KnockoffPair,
    y: &DVector<f64>,
    q: f64,
    plus: bool,
) -> SelectionResult {
    let threshold = knockoff_threshold(w, q, plus);
    let selected = select(w, threshold);
    let signs = estimate_signs(pair, y, &selected);
    SelectionResult {
        selected,
        signs,
        threshold,
        plus,
        q,
    }
}

pub fn validate_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("target level q must lie in (0, 1), got {q}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoffs::{construct_knockoffs, equicorrelated_s};
    use crate::linalg::gram;
    use crate::model::{normalize_columns, Design};
    use crate::rng::{normal_matrix, normal_vector, rng_from};
    use proptest::prelude::*;

    fn sv(w: &[f64]) -> StatVector {
        StatVector::new(w.to_vec(), StatRule::CoefDiff).unwrap()
    }

    /// Direct evaluation of the threshold definition over every candidate.
    fn threshold_by_enumeration(w: &[f64], q: f64, plus: bool) -> f64 {
        let mut best = f64::INFINITY;
        for &c in w {
            let t = c.abs();
            if t == 0.0 {
                continue;
            }
            let neg = w.iter().filter(|v| **v <= -t).count() as f64;
            let pos = w.iter().filter(|v| **v >= t).count() as f64;
            let num = if plus { 1.0 + neg } else { neg };
            if num / pos.max(1.0) <= q && t < best {
                best = t;
            }
        }
        best
    }

    fn path_from(entries: &[f64]) -> EntryPath {
        EntryPath {
            entry_lambda: entries.to_vec(),
            entry_sign: entries.iter().map(|v| if *v > 0.0 { 1 } else { 0 }).collect(),
            entry_order: Vec::new(),
            entry_step: vec![None; entries.len()],
            grid: Vec::new(),
        }
    }

    #[test]
    fn lasso_entry_signs() {
        assert_eq!(stat_lasso_entry(&path_from(&[0.8, 0.3])).unwrap().w, vec![0.8]);
        assert_eq!(stat_lasso_entry(&path_from(&[0.3, 0.8])).unwrap().w, vec![-0.8]);
        assert_eq!(stat_lasso_entry(&path_from(&[0.5, 0.5])).unwrap().w, vec![0.0]);
        assert_eq!(stat_lasso_entry(&path_from(&[0.0, 0.0])).unwrap().w, vec![0.0]);
        assert!(matches!(stat_lasso_entry(&path_from(&[0.1, 0.2, 0.3])), Err(Error::Pairing(3))));
    }

    #[test]
    fn coef_diff_values() {
        assert_eq!(stat_coef_diff(&[2.0], &[0.0]).unwrap().w, vec![2.0]);
        assert_eq!(stat_coef_diff(&[0.0], &[0.0]).unwrap().w, vec![0.0]);
        assert_eq!(stat_coef_diff(&[1.0], &[-3.0]).unwrap().w, vec![-2.0]);
        assert!(stat_coef_diff(&[1.0], &[]).is_err());
    }

    #[test]
    fn threshold_worked_example() {
        let w = sv(&[3.0, -1.0, 2.0]);
        // t = 1: #{W <= -1} = 1, #{W >= 1} = 2, ratio 1/2
        assert_eq!(threshold_by_enumeration(&w.w, 0.5, false), 1.0);
        assert_eq!(knockoff_threshold(&w, 0.5, false), 1.0);
        assert_eq!(select(&w, 1.0), vec![0, 2]);
        // plus: t = 1 gives 2/2, t = 2 gives (1 + 0)/2, t = 3 gives 1/1
        assert_eq!(threshold_by_enumeration(&w.w, 0.5, true), 2.0);
        assert_eq!(knockoff_threshold(&w, 0.5, true), 2.0);
        assert_eq!(select(&w, 2.0), vec![0, 2]);
        // a stricter level leaves knockoff+ with nothing
        assert_eq!(knockoff_threshold(&w, 0.4, true), f64::INFINITY);
    }

    #[test]
    fn all_positive_threshold_is_smallest_magnitude() {
        let w = sv(&[0.7, 0.2, 1.5, 0.0]);
        assert_eq!(knockoff_threshold(&w, 0.1, false), 0.2);
        assert_eq!(select(&w, 0.2), vec![0, 1, 2]);
        assert!(select(&w, f64::INFINITY).is_empty());
    }

    #[test]
    fn empty_and_zero_statistics_select_nothing() {
        assert_eq!(knockoff_threshold(&sv(&[]), 0.2, false), f64::INFINITY);
        assert_eq!(knockoff_threshold(&sv(&[0.0, 0.0]), 0.2, false), f64::INFINITY);
    }

    #[test]
    fn level_validation() {
        assert!(validate_level(0.2).is_ok());
        assert!(validate_level(0.0).is_err());
        assert!(validate_level(1.0).is_err());
    }

    fn random_pair(n: usize, p: usize, seed: u64) -> KnockoffPair {
        let x = normalize_columns(&Design::new(normal_matrix(&mut rng_from(seed), n, p)).unwrap()).unwrap();
        let s = equicorrelated_s(&gram(x.values())).unwrap();
        construct_knockoffs(&x, &s, seed + 1).unwrap()
    }

    #[test]
    fn sign_estimate_follows_knockoff_difference() {
        let pair = random_pair(20, 4, 3);
        let d = pair.x().values().column(2) - pair.x_tilde().values().column(2);
        let plus = estimate_signs(&pair, &d.clone_owned(), &[2]);
        assert_eq!(plus[&2], 1);
        let minus = estimate_signs(&pair, &(-d), &[2]);
        assert_eq!(minus[&2], -1);
        let zero = estimate_signs(&pair, &DVector::zeros(20), &[2]);
        assert_eq!(zero[&2], 1);
    }

    #[test]
    fn strong_effect_sign_is_recovered() {
        let pair = random_pair(60, 10, 5);
        let mut beta = DVector::zeros(10);
        beta[3] = 5.0;
        let mean = pair.x().values() * &beta;
        let mut rng = rng_from(6);
        let correct = (0..100)
            .filter(|_| {
                let y = &mean + normal_vector(&mut rng, 60) * 0.1;
                estimate_signs(&pair, &y, &[3])[&3] == 1
            })
            .count();
        assert!(correct >= 99);
    }

    #[test]
    fn remap_moves_signs() {
        let mut r = SelectionResult::empty(0.2, true);
        r.selected = vec![0, 1];
        r.signs = [(0, 1), (1, -1)].into_iter().collect();
        r.threshold = 1.0;
        let m = r.remap(&[7, 3]);
        assert_eq!(m.selected, vec![3, 7]);
        assert_eq!(m.signs[&3], -1);
        assert_eq!(m.signs[&7], 1);
    }

    #[test]
    fn omp_statistic_orders_pairs() {
        // order over 4 coordinates: knockoff of 0 first, then feature 1
        let w = stat_omp_entry(&[2, 1], 4).unwrap();
        assert_eq!(w.w, vec![-4.0, 3.0]);
    }

    #[test]
    fn degenerate_pairs_get_zero_statistic() {
        let x = normalize_columns(&Design::new(normal_matrix(&mut rng_from(1), 20, 3)).unwrap()).unwrap();
        let pair = construct_knockoffs(&x, &[0.0, 0.0, 0.0], 2).unwrap();
        let y = x.values().column(0) * 3.0;
        let w = Statistic::CoefDiff(LassoConfig::new(0.1))
            .compute_for_pair(&pair, &y, None, 0)
            .unwrap();
        assert!(w.w.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn threshold_matches_enumeration(
            w in proptest::collection::vec(-5i32..=5, 0..25),
            q in 0.05f64..0.6,
        ) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let stat = sv(&w);
            for plus in [false, true] {
                prop_assert_eq!(knockoff_threshold(&stat, q, plus), threshold_by_enumeration(&w, q, plus));
            }
            // knockoff+ is never more liberal
            let t = knockoff_threshold(&stat, q, false);
            let t_plus = knockoff_threshold(&stat, q, true);
            prop_assert!(t_plus >= t);
            let s = select(&stat, t);
            prop_assert!(select(&stat, t_plus).iter().all(|j| s.contains(j)));
        }
    }
}
