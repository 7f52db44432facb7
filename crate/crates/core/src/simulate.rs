//! Synthetic designs, coefficients and responses, and the multi-trial
//! experiment driver.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::SelectionResult;
use crate::linalg::{min_eigenvalue, psd_factor};
use crate::metrics::{score, summarize, summarize_scores, ScoreSummary, Summary, TrialScore};
use crate::model::{normalize_columns, Design, LinearModelSpec, Response};
use crate::pipeline::{
    bh_baseline_on_split, knockoff_filter_lowdim, knockoff_filter_on_split, partial_coefficients,
    partial_signs_of, split_with_mean, PipelineConfig, ScreenedModelRef,
};
use crate::rng::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Rows `N(0, Σ)` with `Σ_jk = ρ^|j−k|`, columns normalized.
    Ar,
    /// Rows `N(ν, Ψ)` scaled by `1/√n`, not normalized. `Ψ` defaults to the
    /// AR matrix for `rho` when not given.
    GaussianGeneral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub rho: f64,
    /// Run the whole experiment once per value, overriding `rho`.
    #[serde(default)]
    pub rho_values: Option<Vec<f64>>,
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
    #[serde(default)]
    pub psi: Option<Vec<Vec<f64>>>,
    /// Draw a fresh design in every trial instead of once per setting.
    #[serde(default)]
    pub redraw: bool,
}

impl DesignSpec {
    pub fn ar(n: usize, p: usize, rho: f64) -> Self {
        Self {
            kind: DesignKind::Ar,
            n,
            p,
            rho,
            rho_values: None,
            nu: None,
            psi: None,
            redraw: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config("design needs n >= 1 and p >= 1".into()));
        }
        for &rho in self.rhos().iter() {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Config(format!("rho = {rho} must lie in [0, 1)")));
            }
        }
        if let Some(nu) = &self.nu {
            if nu.len() != self.p {
                return Err(Error::Config(format!("nu has {} entries, p = {}", nu.len(), self.p)));
            }
        }
        if let Some(psi) = &self.psi {
            psi_matrix(psi, self.p)?;
        }
        Ok(())
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.rho_values.clone().unwrap_or_else(|| vec![self.rho])
    }
}

fn psi_matrix(rows: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Config(format!("psi must be {p}x{p}")));
    }
    let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Config("psi must be symmetric".into()));
    }
    if min_eigenvalue(&m) <= 0.0 {
        return Err(Error::Config("psi must be positive definite".into()));
    }
    Ok(m)
}

/// Rows drawn by the AR(1) recursion `x_j = ρ x_{j−1} + √(1−ρ²) z_j`.
fn ar_rows(n: usize, p: usize, rho: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from(seed);
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = prev;
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            x[(i, j)] = prev;
        }
    }
    x
}

pub fn gen_ar_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<Design> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho = {rho} must lie in [0, 1)")));
    }
    normalize_columns(&Design::new(ar_rows(n, p, rho, seed))?)
}

/// Rows `N(ν, Ψ) / √n`; `Ψ` defaults to the AR matrix for `rho`.
pub fn gen_gaussian_design(
    n: usize,
    p: usize,
    rho: f64,
    nu: Option<&[f64]>,
    psi: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Design> {
    let mut x = match psi {
        None => ar_rows(n, p, rho, seed),
        Some(rows) => {
            let m = psi_matrix(rows, p)?;
            let l = m
                .cholesky()
                .ok_or_else(|| Error::Config("psi is not positive definite".into()))?
                .unpack();
            crate::rng::normal_matrix(&mut rng_from(seed), n, p) * l.transpose()
        }
    };
    if let Some(nu) = nu {
        for mut row in x.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(nu) {
                *v += m;
            }
        }
    }
    x /= (n as f64).sqrt();
    Design::new(x)
}

pub fn gen_design(spec: &DesignSpec, rho: f64, seed: u64) -> Result<Design> {
    match spec.kind {
        DesignKind::Ar => gen_ar_design(spec.n, spec.p, rho, seed),
        DesignKind::GaussianGeneral => {
            gen_gaussian_design(spec.n, spec.p, rho, spec.nu.as_deref(), spec.psi.as_deref(), seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefSpec {
    pub k0: usize,
    #[serde(default)]
    pub k1: usize,
    pub strong_amp: f64,
    /// Standard deviation of the weak effects.
    #[serde(default = "default_weak_sd")]
    pub weak_sd: f64,
    /// Noise standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_weak_sd() -> f64 {
    0.5f64.sqrt()
}

fn default_sigma() -> f64 {
    1.0
}

impl CoefSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k0 + self.k1 > p {
            return Err(Error::Config(format!("k0 + k1 = {} exceeds p = {p}", self.k0 + self.k1)));
        }
        if !(self.strong_amp >= 0.0 && self.weak_sd >= 0.0 && self.sigma >= 0.0) {
            return Err(Error::Config("amplitudes and noise level must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `k0` random coordinates get `±strong_amp`, `k1` further ones get
/// `N(0, weak_sd²)` draws, the rest are zero.
pub fn gen_coefficients(spec: &CoefSpec, p: usize, seed: u64) -> Result<LinearModelSpec> {
    spec.validate(p)?;
    let mut rng = rng_from(seed);
    let picks = sample(&mut rng, p, spec.k0 + spec.k1).into_vec();
    let mut beta = vec![0.0; p];
    let mut strong: Vec<usize> = picks[..spec.k0].to_vec();
    for &j in &strong {
        beta[j] = if rng.random::<bool>() { spec.strong_amp } else { -spec.strong_amp };
    }
    let weak = Normal::new(0.0, spec.weak_sd).map_err(|e| Error::Config(e.to_string()))?;
    for &j in &picks[spec.k0..] {
        beta[j] = weak.sample(&mut rng);
    }
    strong.retain(|&j| beta[j] != 0.0);
    LinearModelSpec::new(beta, spec.sigma)?.with_strong(strong)
}

/// `y = Xβ + σ z`.
pub fn gen_response(x: &Design, beta: &[f64], sigma: f64, seed: u64) -> Result<Response> {
    if beta.len() != x.ncols() {
        return Err(Error::Dimension(format!("{} coefficients for {} columns", beta.len(), x.ncols())));
    }
    let mean = x.values() * DVector::from_column_slice(beta);
    let noise = crate::rng::normal_vector(&mut rng_from(seed), x.nrows());
    Response::new(mean + noise * sigma)
}

/// Response law `y ~ N(μ, Θ)` for the general Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralGaussianResponse {
    pub mu: DVector<f64>,
    pub theta: DMatrix<f64>,
}

impl GeneralGaussianResponse {
    pub fn new(mu: DVector<f64>, theta: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if theta.shape() != (n, n) {
            return Err(Error::Dimension(format!("theta must be {n}x{n}")));
        }
        if (&theta - theta.transpose()).amax() > 1e-12 * theta.amax().max(1.0) {
            return Err(Error::Config("theta must be symmetric".into()));
        }
        if min_eigenvalue(&theta) < -1e-10 * theta.amax().max(1.0) {
            return Err(Error::Config("theta must be positive semidefinite".into()));
        }
        Ok(Self { mu, theta })
    }

    pub fn sample(&self, seed: u64) -> Result<Response> {
        let c = psd_factor(&self.theta, 1e-10 * self.theta.amax().max(1.0))
            .map_err(|min_eigenvalue| Error::InvalidS { min_eigenvalue })?;
        let z = crate::rng::normal_vector(&mut rng_from(seed), self.mu.len());
        Response::new(&self.mu + c.tr_mul(&z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    /// Knockoffs on the full design (needs `n >= 2p`).
    KnockoffLowdim,
    /// Screen on part 0, knockoffs on part 1, split or recycle.
    Knockoff,
    /// Screen on part 0, least squares + BH on part 1.
    Bh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
    #[serde(default)]
    pub params: PipelineConfig,
}

impl MethodSpec {
    /// Check the method's parameters against an `n × p` design.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let tagged = |e: Error| match e {
            Error::Config(msg) => Error::Config(format!("method {}: {msg}", self.name)),
            other => other,
        };
        match self.kind {
            MethodKind::KnockoffLowdim => {
                crate::filter::validate_level(self.params.q).map_err(tagged)?;
                if n < 2 * p {
                    return Err(Error::Config(format!(
                        "method {}: low-dimensional knockoffs need n >= 2p",
                        self.name
                    )));
                }
                self.params.statistic().map(|_| ()).map_err(tagged)
            }
            _ => self.params.validate(n, p).map_err(tagged),
        }
    }
}

/// Names must be unique across methods.
pub fn check_method_names(methods: &[MethodSpec]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    let mut names: Vec<&str> = methods.iter().map(|m| m.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != methods.len() {
        return Err(Error::Config("method names must be unique".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub design: DesignSpec,
    pub coefficients: CoefSpec,
    pub methods: Vec<MethodSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        check_method_names(&self.methods)?;
        self.design.validate()?;
        self.coefficients.validate(self.design.p)?;
        for m in &self.methods {
            m.validate(self.design.n, self.design.p)?;
        }
        Ok(())
    }
}

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub setting: usize,
    pub rho: f64,
    pub trial: usize,
    pub method: String,
    /// Scored against `sign(β)`.
    pub full: Option<TrialScore>,
    /// Scored against the signs of the partial coefficients on the screened set.
    pub partial: Option<TrialScore>,
    /// Screened set covers the support and fits in half the inference rows.
    pub sure_screen: Option<bool>,
    pub screen_size: Option<usize>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Aggregates for one method at one setting.
impl TrialRecord {
    pub fn new(setting: usize, rho: f64, trial: usize, method: &str) -> Self {
        Self {
            setting,
            rho,
            trial,
            method: method.to_string(),
            full: None,
            partial: None,
            sure_screen: None,
            screen_size: None,
            warnings: Vec::new(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub setting: usize,
    pub rho: f64,
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub full: ScoreSummary,
    pub partial: ScoreSummary,
    pub sure_screen_rate: Option<Summary>,
    /// Directional FDR over sure-screening trials only; `None` if there were none.
    pub fdr_dir_given_sure_screen: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, setting: usize, method: &str) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.setting == setting && s.method == method)
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialSeeds {
    design: u64,
    noise: u64,
    pipeline: u64,
}

fn setting_seed(master: u64, setting: usize) -> u64 {
    derive_seed(derive_seed(master, stream::SETTING), setting as u64)
}

fn trial_seeds(setting_seed: u64, trial: usize) -> TrialSeeds {
    let t = derive_seed(derive_seed(setting_seed, stream::TRIAL), trial as u64);
    TrialSeeds {
        design: derive_seed(t, stream::DESIGN),
        noise: derive_seed(t, stream::NOISE),
        pipeline: derive_seed(t, stream::PIPELINE),
    }
}

/// Apply one method to `(x, y)` with the given pipeline seed and fill in the
/// selection-dependent fields of `record`. Scores are filled only when the
/// ground truth and the noiseless mean `Xβ` are supplied.
pub fn run_method(
    method: &MethodSpec,
    x: &Design,
    y: &Response,
    truth: Option<(&LinearModelSpec, &DVector<f64>)>,
    pipeline_seed: u64,
    record: &mut TrialRecord,
) -> Result<SelectionResult> {
    let mut cfg = method.params.clone();
    cfg.seed = pipeline_seed;
    if method.kind == MethodKind::KnockoffLowdim {
        let stat = cfg.statistic()?;
        let sel = knockoff_filter_lowdim(x, y, cfg.q, &stat, cfg.plus, cfg.seed)?;
        if let Some((truth, mu)) = truth {
            let full = score(&sel.selected, &sel.signs, truth, &truth.true_signs(), cfg.q);
            let beta_partial = partial_coefficients(x, &Response::new(mu.clone())?)?;
            let partial_signs = partial_signs_of(&beta_partial);
            record.full = Some(full);
            record.partial = Some(score(&sel.selected, &sel.signs, truth, &partial_signs, cfg.q));
        }
        return Ok(sel);
    }
    let zero_mean = DVector::zeros(x.nrows());
    let mu = truth.map_or(&zero_mean, |(_, mu)| mu);
    let (split, mu1) = split_with_mean(x, y, mu, &cfg)?;
    let outcome = match method.kind {
        MethodKind::Knockoff => knockoff_filter_on_split(&split, &cfg)?,
        _ => bh_baseline_on_split(&split, &cfg)?,
    };
    record.screen_size = Some(outcome.screen.len());
    record.warnings = outcome.warnings;
    let sel = outcome.selection;
    if let Some((truth, _)) = truth {
        record.full = Some(score(&sel.selected, &sel.signs, truth, &truth.true_signs(), cfg.q));
        let screened = ScreenedModelRef::new(outcome.screen.s0.clone());
        let partial_signs = if screened.s0.is_empty() {
            vec![0; truth.p()]
        } else {
            let x1s = split.x1.select_columns(&screened.s0);
            let bp = partial_coefficients(&x1s, &Response::new(mu1)?)?;
            screened.with_partial(bp)?.partial_signs(truth.p()).unwrap_or_default()
        };
        record.partial = Some(score(&sel.selected, &sel.signs, truth, &partial_signs, cfg.q));
        record.sure_screen = Some(outcome.screen.covers(truth.support()) && 2 * outcome.screen.len() <= split.n1());
    }
    Ok(sel)
}

fn run_trial(
    cfg: &ExperimentConfig,
    setting: usize,
    rho: f64,
    trial: usize,
    fixed_x: Option<&Design>,
    truth: &LinearModelSpec,
) -> Vec<TrialRecord> {
    let seeds = trial_seeds(setting_seed(cfg.seed, setting), trial);
    let data = (|| -> Result<(Design, Response, DVector<f64>)> {
        let x = match fixed_x {
            Some(x) => x.clone(),
            None => gen_design(&cfg.design, rho, seeds.design)?,
        };
        let y = gen_response(&x, truth.beta(), truth.sigma(), seeds.noise)?;
        let mu = x.values() * DVector::from_column_slice(truth.beta());
        Ok((x, y, mu))
    })();
    cfg.methods
        .iter()
        .map(|m| {
            let mut rec = TrialRecord::new(setting, rho, trial, &m.name);
            let res = match &data {
                Ok((x, y, mu)) => run_method(m, x, y, Some((truth, mu)), seeds.pipeline, &mut rec)
                    .map(|_| ())
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = res {
                log::warn!("setting {setting} trial {trial} method {}: {e}", m.name);
                rec.full = None;
                rec.partial = None;
                rec.error = Some(e);
            }
            rec
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn map_trials<F>(trials: usize, f: F) -> Vec<Vec<TrialRecord>>
where
    F: Fn(usize) -> Vec<TrialRecord> + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<F>(trials: usize, f: F) -> Vec<Vec<TrialRecord>>
where
    F: Fn(usize) -> Vec<TrialRecord>,
{
    (0..trials).map(f).collect()
}

/// Aggregate the records of one method in one setting.
pub fn summarize_method(records: &[&TrialRecord], setting: usize, rho: f64, method: &str) -> MethodSummary {
    let ok: Vec<&TrialRecord> = records.iter().copied().filter(|r| r.error.is_none()).collect();
    let full: Vec<TrialScore> = ok.iter().filter_map(|r| r.full).collect();
    let partial: Vec<TrialScore> = ok.iter().filter_map(|r| r.partial).collect();
    let sure: Vec<bool> = ok.iter().filter_map(|r| r.sure_screen).collect();
    let (sure_rate, cond) = if sure.is_empty() {
        (None, None)
    } else {
        let rate = summarize(&sure.iter().map(|&b| f64::from(u8::from(b))).collect::<Vec<_>>());
        let cond: Vec<f64> = ok
            .iter()
            .filter(|r| r.sure_screen == Some(true))
            .filter_map(|r| r.full.map(|s| s.fdp_dir))
            .collect();
        (Some(rate), (!cond.is_empty()).then(|| summarize(&cond)))
    };
    MethodSummary {
        setting,
        rho,
        method: method.to_string(),
        trials: records.len(),
        failures: records.len() - ok.len(),
        full: summarize_scores(&full),
        partial: summarize_scores(&partial),
        sure_screen_rate: sure_rate,
        fdr_dir_given_sure_screen: cond,
    }
}

/// Run every method on every trial of every setting. The design (unless
/// `redraw`) and the coefficients are drawn once per setting; the noise is
/// fresh per trial; all methods in a trial share data and pipeline seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (setting, rho) in cfg.design.rhos().into_iter().enumerate() {
        let sseed = setting_seed(cfg.seed, setting);
        let truth = gen_coefficients(&cfg.coefficients, cfg.design.p, derive_seed(sseed, stream::COEFFICIENTS))?;
        let fixed_x = if cfg.design.redraw {
            None
        } else {
            Some(gen_design(&cfg.design, rho, derive_seed(sseed, stream::DESIGN))?)
        };
        let per_trial = map_trials(cfg.trials, |t| run_trial(cfg, setting, rho, t, fixed_x.as_ref(), &truth));
        let setting_records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
        for m in &cfg.methods {
            let mine: Vec<&TrialRecord> = setting_records.iter().filter(|r| r.method == m.name).collect();
            let s = summarize_method(&mine, setting, rho, &m.name);
            if s.failures > 0 {
                log::warn!("method {} failed on {} of {} trials", m.name, s.failures, s.trials);
            }
            summaries.push(s);
        }
        records.extend(setting_records);
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        summaries,
    })
}
