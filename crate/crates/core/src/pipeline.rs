//! End-to-end procedures: the low-dimensional knockoff filter, the
//! screen-then-knockoff pipeline with splitting or recycling, and the
//! least-squares + Benjamini–Hochberg baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::filter::{apply_filter, validate_level, SelectionResult, StatRule, StatVector, Statistic};
use crate::knockoffs::{
    construct_knockoffs, construct_knockoffs_rescaled, equicorrelated_s, recycle_knockoffs, KnockoffPair,
};
use crate::linalg::{gram, qr_least_squares};
use crate::model::{normalize_columns, Design, Response, SplitData};
use crate::rng::{derive_seed, stream};
use crate::screening::{
    lasso_screen_subset, marginal_prescreen, random_rotation, rotate_then_split, split_by_rotation, split_indices,
    split_rows, RotationSplit, ScreenResult,
};
use crate::solvers::{LambdaRule, LassoConfig, PathConfig, SqrtLassoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Split,
    Recycle,
}

/// Settings for one run of the high-dimensional pipeline (and, through
/// `q`, `statistic` and `plus`, of the low-dimensional filter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub q: f64,
    /// Rows used for screening.
    pub n0: usize,
    /// Screening cap; `n1 / 4` when unset.
    pub k_max: Option<usize>,
    pub mode: Mode,
    pub sign_restricted: bool,
    pub statistic: StatRule,
    pub plus: bool,
    pub rotate: bool,
    pub prescreen_m: Option<usize>,
    /// Square-root Lasso scale.
    pub kappa: Option<f64>,
    /// Penalty for the plain Lasso coefficient-difference statistic.
    pub lambda: Option<f64>,
    /// Use this quantile of the Monte Carlo draws instead of their mean.
    pub lambda_quantile: Option<f64>,
    pub mc_reps: usize,
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let path = PathConfig::default();
        Self {
            q: 0.2,
            n0: 0,
            k_max: None,
            mode: Mode::Recycle,
            sign_restricted: false,
            statistic: StatRule::LassoEntry,
            plus: true,
            rotate: false,
            prescreen_m: None,
            kappa: None,
            lambda: None,
            lambda_quantile: None,
            mc_reps: 500,
            grid_size: path.grid_size,
            lambda_min_ratio: path.lambda_min_ratio,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            grid_size: self.grid_size,
            lambda_min_ratio: self.lambda_min_ratio,
            ..PathConfig::default()
        }
    }

    pub fn statistic(&self) -> Result<Statistic> {
        Ok(match self.statistic {
            StatRule::LassoEntry => Statistic::LassoEntry(self.path_config()),
            StatRule::CoefDiff => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| Error::Config("coef-diff statistic needs `lambda`".into()))?;
                let cfg = LassoConfig::new(lambda);
                cfg.validate()?;
                Statistic::CoefDiff(cfg)
            }
            StatRule::SqrtLassoCoefDiff => {
                let mut cfg = SqrtLassoConfig::new(self.kappa.unwrap_or(SqrtLassoConfig::default().kappa));
                cfg.mc_reps = self.mc_reps;
                if let Some(level) = self.lambda_quantile {
                    cfg.rule = LambdaRule::Quantile(level);
                }
                Statistic::SqrtLassoCoefDiff(cfg)
            }
            StatRule::OmpEntry => Statistic::OmpEntry,
        })
    }

    pub fn n1(&self, n: usize) -> usize {
        n.saturating_sub(self.n0)
    }

    pub fn k_max_for(&self, n: usize) -> usize {
        self.k_max.unwrap_or((self.n1(n) / 4).max(1))
    }

    /// Check the settings against an `n × p` problem.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        validate_level(self.q)?;
        if self.n0 == 0 || self.n0 >= n {
            return Err(Error::Config(format!("n0 = {} must satisfy 1 <= n0 < n = {n}", self.n0)));
        }
        if let Some(m) = self.prescreen_m {
            if m == 0 || m > p {
                return Err(Error::Config(format!("prescreen_m = {m} must lie in 1..={p}")));
            }
        }
        if self.k_max == Some(0) {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if self.sign_restricted && self.statistic == StatRule::OmpEntry {
            return Err(Error::Config("omp-entry cannot be sign restricted".into()));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be positive, got {k}")));
            }
        }
        self.path_config().validate()?;
        self.statistic()?;
        Ok(())
    }
}

/// The screened submodel and, for evaluation, its partial coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenedModelRef {
    pub s0: Vec<usize>,
    pub beta_partial: Option<Vec<f64>>,
}

impl ScreenedModelRef {
    pub fn new(s0: Vec<usize>) -> Self {
        Self { s0, beta_partial: None }
    }

    pub fn with_partial(mut self, beta_partial: Vec<f64>) -> Result<Self> {
        if beta_partial.len() != self.s0.len() {
            return Err(Error::Dimension(format!(
                "{} partial coefficients for {} screened features",
                beta_partial.len(),
                self.s0.len()
            )));
        }
        self.beta_partial = Some(beta_partial);
        Ok(self)
    }

    /// Signs of the partial coefficients spread over all `p` features
    /// (0 off the screened set).
    pub fn partial_signs(&self, p: usize) -> Option<Vec<i8>> {
        let signs = partial_signs_of(self.beta_partial.as_ref()?);
        let mut out = vec![0i8; p];
        for (&j, &sign) in self.s0.iter().zip(&signs) {
            out[j] = sign;
        }
        Some(out)
    }
}

/// Normalize, build equicorrelated knockoffs, compute `W`, threshold and
/// attach sign estimates.
pub fn knockoff_filter_lowdim(
    x: &Design,
    y: &Response,
    q: f64,
    statistic: &Statistic,
    plus: bool,
    seed: u64,
) -> Result<SelectionResult> {
    Ok(knockoff_filter_lowdim_detailed(x, y, q, statistic, plus, seed)?.0)
}

/// As [`knockoff_filter_lowdim`], also returning `W`.
pub fn knockoff_filter_lowdim_detailed(
    x: &Design,
    y: &Response,
    q: f64,
    statistic: &Statistic,
    plus: bool,
    seed: u64,
) -> Result<(SelectionResult, StatVector)> {
    validate_level(q)?;
    y.check_matches(x)?;
    let xn = normalize_columns(x)?;
    let s = equicorrelated_s(&gram(xn.values()))?;
    let pair = construct_knockoffs(&xn, &s, derive_seed(seed, stream::COMPLEMENT))?;
    let w = statistic.compute_for_pair(&pair, y.values(), None, derive_seed(seed, stream::SQRT_LAMBDA))?;
    Ok((apply_filter(&w, &pair, y.values(), q, plus), w))
}

/// Result of the high-dimensional pipeline.
#[derive(Debug, Clone)]
pub struct HighDimOutcome {
    /// Selections in original feature numbering.
    pub selection: SelectionResult,
    /// Screening result after any truncation.
    pub screen: ScreenResult,
    /// Statistics aligned with `screen.s0`; absent when nothing was screened.
    pub w: Option<StatVector>,
    pub warnings: Vec<String>,
}

/// Rotate-or-shuffle split dictated by `cfg.seed`. Applying this to `(X, μ)`
/// with the same config splits the mean exactly like the response.
pub fn split_data(x: &Design, y: &Response, cfg: &PipelineConfig) -> Result<SplitData> {
    if cfg.rotate {
        rotate_then_split(x, y, cfg.n0, derive_seed(cfg.seed, stream::ROTATION))
    } else {
        split_rows(x, y, cfg.n0, derive_seed(cfg.seed, stream::SPLIT))
    }
}

/// [`split_data`] that also carries a known mean vector through the same
/// rotation or row partition, returning its part-1 block.
pub fn split_with_mean(
    x: &Design,
    y: &Response,
    mu: &DVector<f64>,
    cfg: &PipelineConfig,
) -> Result<(SplitData, DVector<f64>)> {
    y.check_matches(x)?;
    if mu.len() != x.nrows() {
        return Err(Error::Dimension("mean vector length differs from the row count".into()));
    }
    let n = x.nrows();
    if cfg.rotate {
        let rot = RotationSplit {
            u: random_rotation(n, derive_seed(cfg.seed, stream::ROTATION)).u,
            n0: cfg.n0,
        };
        let split = split_by_rotation(x, y, &rot)?;
        let mu1 = (&rot.u * mu).rows(cfg.n0, n - cfg.n0).clone_owned();
        Ok((split, mu1))
    } else {
        let (part0, part1) = split_indices(n, cfg.n0, derive_seed(cfg.seed, stream::SPLIT))?;
        let split = split_rows(x, y, cfg.n0, derive_seed(cfg.seed, stream::SPLIT))?;
        debug_assert_eq!(part0.len(), split.n0());
        let mu1 = DVector::from_iterator(part1.len(), part1.iter().map(|&i| mu[i]));
        Ok((split, mu1))
    }
}

/// Optional marginal pre-screen, Lasso screen on part 0, then truncation to
/// `⌊n1/2⌋` if the screened set is too large for knockoffs on part 1.
pub fn screen_split(split: &SplitData, cfg: &PipelineConfig, warnings: &mut Vec<String>) -> Result<ScreenResult> {
    let p = split.x0.ncols();
    let n1 = split.n1();
    let candidates: Vec<usize> = match cfg.prescreen_m {
        Some(m) => marginal_prescreen(&split.x0, &split.y0, m)?,
        None => (0..p).collect(),
    };
    let k_max = cfg.k_max_for(split.n0() + n1);
    let mut screen = lasso_screen_subset(&split.x0, &split.y0, &candidates, k_max, &cfg.path_config())?;
    let cap = n1 / 2;
    if screen.len() > cap {
        let msg = format!(
            "screened {} features but only {n1} inference rows; keeping the first {cap}",
            screen.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
        screen.truncate(cap);
    }
    Ok(screen)
}

pub fn knockoff_filter_highdim(x: &Design, y: &Response, cfg: &PipelineConfig) -> Result<HighDimOutcome> {
    y.check_matches(x)?;
    cfg.validate(x.nrows(), x.ncols())?;
    let split = split_data(x, y, cfg)?;
    knockoff_filter_on_split(&split, cfg)
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (n0, n1) = (top.nrows(), bottom.nrows());
    let mut out = DMatrix::zeros(n0 + n1, top.ncols());
    out.rows_mut(0, n0).copy_from(top);
    out.rows_mut(n0, n1).copy_from(bottom);
    out
}

fn stack_vec(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

/// Recycled pair: original rows on top of both blocks, so the knockoffs equal
/// the features on the screening rows. The Gram identities carry over with
/// the same `s`.
pub fn recycle_pair(part1: &KnockoffPair, x0_screened: &DMatrix<f64>) -> Result<KnockoffPair> {
    let n0 = x0_screened.nrows();
    let full = Design::new(stack_rows(x0_screened, part1.x().values()))?;
    let x_tilde = recycle_knockoffs(&full, part1.x_tilde(), n0)?;
    KnockoffPair::from_parts(full, x_tilde, part1.s().to_vec())
}

/// The pipeline after splitting: screen, build knockoffs on part 1, compute
/// statistics on part 1 (split) or on the recycled full data, then select.
pub fn knockoff_filter_on_split(split: &SplitData, cfg: &PipelineConfig) -> Result<HighDimOutcome> {
    let n = split.n0() + split.n1();
    cfg.validate(n, split.x0.ncols())?;
    let mut warnings = Vec::new();
    let screen = screen_split(split, cfg, &mut warnings)?;
    if screen.is_empty() {
        let msg = "screening selected no features".to_string();
        log::info!("{msg}");
        warnings.push(msg);
        return Ok(HighDimOutcome {
            selection: SelectionResult::empty(cfg.q, cfg.plus),
            screen,
            w: None,
            warnings,
        });
    }
    let x1s = split.x1.select_columns(&screen.s0);
    let pair1 = construct_knockoffs_rescaled(&x1s, derive_seed(cfg.seed, stream::COMPLEMENT))?;
    let (pair, y) = match cfg.mode {
        Mode::Split => (pair1, split.y1.values().clone()),
        Mode::Recycle => {
            let x0s = split.x0.values().select_columns(screen.s0.iter());
            (
                recycle_pair(&pair1, &x0s)?,
                stack_vec(split.y0.values(), split.y1.values()),
            )
        }
    };
    let signs = cfg.sign_restricted.then_some(screen.signs0.as_slice());
    let w = cfg
        .statistic()?
        .compute_for_pair(&pair, &y, signs, derive_seed(cfg.seed, stream::SQRT_LAMBDA))?;
    let selection = apply_filter(&w, &pair, &y, cfg.q, cfg.plus).remap(&screen.s0);
    Ok(HighDimOutcome {
        selection,
        screen,
        w: Some(w),
        warnings,
    })
}

/// Partial coefficients at most this fraction of the largest one in magnitude
/// count as zero. A least-squares fit of an exact linear combination leaves
/// round-off of order 1e-15 on the unused columns.
pub const PARTIAL_ZERO_TOL: f64 = 1e-9;

/// Signs of partial coefficients with round-off snapped to 0.
pub fn partial_signs_of(beta_partial: &[f64]) -> Vec<i8> {
    let scale = beta_partial.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    beta_partial
        .iter()
        .map(|&b| if b.abs() <= PARTIAL_ZERO_TOL * scale { 0 } else { crate::model::sign_of(b) })
        .collect()
}

/// `(X1ᵀX1)⁻¹ X1ᵀ μ1`: the coefficients of the mean on the screened columns.
pub fn partial_coefficients(x1_s0: &Design, mu1: &Response) -> Result<Vec<f64>> {
    mu1.check_matches(x1_s0)?;
    Ok(qr_least_squares(x1_s0.values(), mu1.values())?.as_slice().to_vec())
}

/// Benjamini–Hochberg step-up: reject the `k*` smallest p-values where
/// `k* = max{k : p_(k) <= k q / m}`. Returned indices are sorted.
pub fn bh_stepup(pvalues: &[f64], q: f64) -> Result<Vec<usize>> {
    if let Some(j) = pvalues.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config(format!("p-value {j} = {} is outside [0, 1]", pvalues[j])));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let k_star = (1..=m)
        .rev()
        .find(|&k| pvalues[order[k - 1]] <= k as f64 * q / m as f64)
        .unwrap_or(0);
    let mut out = order[..k_star].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Per-feature t-statistics and one-sided p-values of the baseline, aligned
/// with `screen.s0`.
pub fn bh_pvalues(x1s: &DMatrix<f64>, y1: &DVector<f64>, signs0: &[i8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n1, k) = x1s.shape();
    if n1 <= k {
        return Err(Error::Config(format!(
            "least squares needs more inference rows ({n1}) than screened features ({k})"
        )));
    }
    let beta = qr_least_squares(x1s, y1)?;
    let resid = y1 - x1s * &beta;
    let df = (n1 - k) as f64;
    let sigma = (resid.norm_squared() / df).sqrt();
    let inv = gram(x1s)
        .cholesky()
        .ok_or_else(|| Error::Singular("screened part-1 design is rank deficient".into()))?
        .inverse();
    let tdist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(e.to_string()))?;
    let mut t = Vec::with_capacity(k);
    let mut pv = Vec::with_capacity(k);
    for j in 0..k {
        let tj = if sigma > 0.0 {
            beta[j] / (sigma * inv[(j, j)].sqrt())
        } else {
            beta[j].signum() * f64::INFINITY
        };
        let p = if signs0[j] >= 0 { tdist.sf(tj) } else { tdist.cdf(tj) };
        t.push(tj);
        pv.push(if p.is_nan() { 1.0 } else { p.clamp(0.0, 1.0) });
    }
    Ok((t, pv))
}

/// Screen exactly as the knockoff pipeline does, then least squares on part 1
/// with one-sided t-tests in the screening direction and BH at level `q`.
pub fn bh_baseline(x: &Design, y: &Response, cfg: &PipelineConfig) -> Result<HighDimOutcome> {
    y.check_matches(x)?;
    cfg.validate(x.nrows(), x.ncols())?;
    let split = split_data(x, y, cfg)?;
    bh_baseline_on_split(&split, cfg)
}

pub fn bh_baseline_on_split(split: &SplitData, cfg: &PipelineConfig) -> Result<HighDimOutcome> {
    let mut warnings = Vec::new();
    let screen = screen_split(split, cfg, &mut warnings)?;
    let mut selection = SelectionResult::empty(cfg.q, false);
    if screen.is_empty() {
        warnings.push("screening selected no features".into());
        return Ok(HighDimOutcome { selection, screen, w: None, warnings });
    }
    let x1s = split.x1.values().select_columns(screen.s0.iter());
    let (_, pv) = bh_pvalues(&x1s, split.y1.values(), &screen.signs0)?;
    let rejected = bh_stepup(&pv, cfg.q)?;
    let mut selected: Vec<usize> = rejected.iter().map(|&i| screen.s0[i]).collect();
    selected.sort_unstable();
    selection.signs = rejected.iter().map(|&i| (screen.s0[i], screen.signs0[i])).collect();
    selection.selected = selected;
    selection.threshold = f64::NAN;
    Ok(HighDimOutcome { selection, screen, w: None, warnings })
}
