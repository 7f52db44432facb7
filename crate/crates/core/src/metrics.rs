//! Per-trial error and power functionals and their Monte Carlo summaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::LinearModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialScore {
    pub fdp: f64,
    pub fdp_dir: f64,
    pub mfdr_dir_summand: f64,
    pub power: f64,
    pub restricted_power: f64,
    pub n_selected: usize,
}

/// Share of selections with `β_j = 0`.
pub fn fdp(selected: &[usize], truth: &LinearModelSpec) -> f64 {
    let nulls = selected.iter().filter(|&&j| truth.beta()[j] == 0.0).count();
    nulls as f64 / selected.len().max(1) as f64
}

fn sign_errors(selected: &[usize], signs: &BTreeMap<usize, i8>, true_signs: &[i8]) -> usize {
    selected
        .iter()
        .filter(|&&j| signs.get(&j).copied().unwrap_or(0) != true_signs[j])
        .count()
}

/// Share of selections whose declared sign differs from the true sign, where
/// a zero effect has sign 0 and so always counts as an error.
pub fn fdp_dir(selected: &[usize], signs: &BTreeMap<usize, i8>, true_signs: &[i8]) -> f64 {
    sign_errors(selected, signs, true_signs) as f64 / selected.len().max(1) as f64
}

/// Sign errors over `|Ŝ| + 1/q`.
pub fn mfdr_dir_summand(
    selected: &[usize],
    signs: &BTreeMap<usize, i8>,
    true_signs: &[i8],
    q: f64,
) -> f64 {
    sign_errors(selected, signs, true_signs) as f64 / (selected.len() as f64 + 1.0 / q)
}

/// `|Ŝ ∩ S*| / |S*|` with `S*` the support or `restricted_to`.
pub fn power(selected: &[usize], truth: &LinearModelSpec, restricted_to: Option<&[usize]>) -> f64 {
    let target = restricted_to.unwrap_or(truth.support());
    if target.is_empty() {
        log::warn!("power requested for an empty target set; reporting 0");
        return 0.0;
    }
    let hits = selected.iter().filter(|j| target.contains(j)).count();
    hits as f64 / target.len() as f64
}

/// Score one selection. `true_signs` may differ from `sign(β)` (for the
/// reduced-model target); `fdp` then counts selections with true sign 0.
pub fn score(
    selected: &[usize],
    signs: &BTreeMap<usize, i8>,
    truth: &LinearModelSpec,
    true_signs: &[i8],
    q: f64,
) -> TrialScore {
    let nulls = selected.iter().filter(|&&j| true_signs[j] == 0).count();
    TrialScore {
        fdp: nulls as f64 / selected.len().max(1) as f64,
        fdp_dir: fdp_dir(selected, signs, true_signs),
        mfdr_dir_summand: mfdr_dir_summand(selected, signs, true_signs, q),
        power: power(selected, truth, None),
        restricted_power: power(selected, truth, Some(truth.strong())),
        n_selected: selected.len(),
    }
}

/// Monte Carlo mean with standard error `sd / sqrt(trials)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            se: f64::NAN,
            count: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, se, count: n }
}

/// Column-wise summaries of a set of trial scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub fdr: Summary,
    pub fdr_dir: Summary,
    pub mfdr_dir: Summary,
    pub power: Summary,
    pub restricted_power: Summary,
    pub n_selected: Summary,
}

pub fn summarize_scores(scores: &[TrialScore]) -> ScoreSummary {
    let col = |f: fn(&TrialScore) -> f64| summarize(&scores.iter().map(f).collect::<Vec<_>>());
    ScoreSummary {
        fdr: col(|s| s.fdp),
        fdr_dir: col(|s| s.fdp_dir),
        mfdr_dir: col(|s| s.mfdr_dir_summand),
        power: col(|s| s.power),
        restricted_power: col(|s| s.restricted_power),
        n_selected: col(|s| s.n_selected as f64),
    }
}
