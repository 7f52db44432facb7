//! Browser bindings. Every export takes plain numbers or JSON text and
//! returns JSON text, so the page needs no generated type definitions.

use knockoff::filter::{knockoff_threshold, StatVector, Statistic};
use knockoff::oracles::{lemma1_exact, BernoulliStoppingInstance, StoppingRule, LEMMA1_MAX_N};
use knockoff::pipeline::knockoff_filter_lowdim_detailed;
use knockoff::rng::{derive_seed, stream};
use knockoff::simulate::{gen_ar_design, gen_coefficients, gen_response, CoefSpec};
use knockoff::solvers::PathConfig;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[derive(Debug, Serialize)]
pub struct FilterDemo {
    /// Feature statistics.
    pub w: Vec<f64>,
    /// True coefficient sign per feature (0 for nulls).
    pub truth: Vec<i8>,
    pub threshold: f64,
    pub selected: Vec<usize>,
    /// Estimated sign of each selected feature, aligned with `selected`.
    pub signs: Vec<i8>,
    pub false_discoveries: usize,
    pub sign_errors: usize,
}

/// Simulate an AR design with `k` signals of amplitude `amp`, run the
/// knockoff filter with the lasso-entry statistic and report `W`.
#[allow(clippy::too_many_arguments)]
pub fn filter_demo(
    n: usize,
    p: usize,
    k: usize,
    amp: f64,
    rho: f64,
    q: f64,
    plus: bool,
    seed: u64,
) -> knockoff::Result<FilterDemo> {
    let x = gen_ar_design(n, p, rho, derive_seed(seed, stream::DESIGN))?;
    let spec = CoefSpec {
        k0: k,
        k1: 0,
        strong_amp: amp,
        weak_sd: 0.0,
        sigma: 1.0,
    };
    let truth = gen_coefficients(&spec, p, derive_seed(seed, stream::COEFFICIENTS))?;
    let y = gen_response(&x, truth.beta(), truth.sigma(), derive_seed(seed, stream::NOISE))?;
    let stat = Statistic::LassoEntry(PathConfig {
        grid_size: 100,
        ..PathConfig::default()
    });
    let (sel, w) = knockoff_filter_lowdim_detailed(&x, &y, q, &stat, plus, derive_seed(seed, stream::PIPELINE))?;
    let true_signs = truth.true_signs();
    let signs: Vec<i8> = sel.selected.iter().map(|j| sel.signs[j]).collect();
    let false_discoveries = sel.selected.iter().filter(|&&j| true_signs[j] == 0).count();
    let sign_errors = sel.selected.iter().zip(&signs).filter(|(&j, &s)| true_signs[j] != s).count();
    Ok(FilterDemo {
        w: w.w,
        truth: true_signs,
        threshold: sel.threshold,
        selected: sel.selected,
        signs,
        false_discoveries,
        sign_errors,
    })
}

#[wasm_bindgen(js_name = filterDemo)]
#[allow(clippy::too_many_arguments)]
pub fn filter_demo_js(
    n: usize,
    p: usize,
    k: usize,
    amp: f64,
    rho: f64,
    q: f64,
    plus: bool,
    seed: u32,
) -> Result<String, JsValue> {
    to_json(&filter_demo(n, p, k, amp, rho, q, plus, u64::from(seed)).map_err(js_err)?)
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub positives: usize,
    pub negatives: usize,
    /// `#{W_j <= -t} / max(#{W_j >= t}, 1)`.
    pub estimate: f64,
    /// Same with one added to the numerator.
    pub estimate_plus: f64,
}

#[derive(Debug, Serialize)]
pub struct ThresholdCurve {
    pub points: Vec<CurvePoint>,
    pub threshold: f64,
    pub threshold_plus: f64,
}

/// Estimated false discovery proportion at every candidate threshold.
pub fn threshold_curve(w: &[f64], q: f64) -> knockoff::Result<ThresholdCurve> {
    knockoff::filter::validate_level(q)?;
    let stats = StatVector::new(w.to_vec(), knockoff::filter::StatRule::LassoEntry)?;
    let mut ts: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let points = ts
        .into_iter()
        .map(|t| {
            let positives = w.iter().filter(|&&v| v >= t).count();
            let negatives = w.iter().filter(|&&v| v <= -t).count();
            let denom = positives.max(1) as f64;
            CurvePoint {
                t,
                positives,
                negatives,
                estimate: negatives as f64 / denom,
                estimate_plus: (1 + negatives) as f64 / denom,
            }
        })
        .collect();
    Ok(ThresholdCurve {
        points,
        threshold: knockoff_threshold(&stats, q, false),
        threshold_plus: knockoff_threshold(&stats, q, true),
    })
}

#[wasm_bindgen(js_name = thresholdCurve)]
pub fn threshold_curve_js(w_json: &str, q: f64) -> Result<String, JsValue> {
    let w: Vec<f64> = serde_json::from_str(w_json).map_err(js_err)?;
    to_json(&threshold_curve(&w, q).map_err(js_err)?)
}

/// Stopping rule as sent by the page.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleSpec {
    Always,
    Fixed { j0: usize },
    RatioBelow { level: f64 },
    Linear { intercept: f64, slope: f64 },
    TailOnes { k: usize },
}

impl From<RuleSpec> for StoppingRule {
    fn from(r: RuleSpec) -> Self {
        match r {
            RuleSpec::Always => StoppingRule::Always,
            RuleSpec::Fixed { j0 } => StoppingRule::Fixed(j0),
            RuleSpec::RatioBelow { level } => StoppingRule::RatioBelow(level),
            RuleSpec::Linear { intercept, slope } => StoppingRule::Linear { intercept, slope },
            RuleSpec::TailOnes { k } => StoppingRule::TailOnes(k),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StoppingResult {
    pub expectation: f64,
    pub bound: f64,
    pub rho_floor: f64,
}

/// Exact `E[(1 + J) / (1 + B_1 + … + B_J)]` for independent Bernoulli(ρ_i).
pub fn stopping_expectation(rho: &[f64], rule: RuleSpec) -> knockoff::Result<StoppingResult> {
    if rho.is_empty() || rho.len() > LEMMA1_MAX_N {
        return Err(knockoff::Error::Config(format!("need 1..={LEMMA1_MAX_N} probabilities")));
    }
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(knockoff::Error::Config(format!("probability {r} outside (0, 1]")));
    }
    let rho_floor = rho.iter().copied().fold(1.0, f64::min);
    let inst = BernoulliStoppingInstance {
        rho: rho.to_vec(),
        rho_floor,
        rule: rule.into(),
    };
    Ok(StoppingResult {
        expectation: lemma1_exact(&inst)?,
        bound: inst.bound(),
        rho_floor,
    })
}

#[wasm_bindgen(js_name = stoppingExpectation)]
pub fn stopping_expectation_js(rho_json: &str, rule_json: &str) -> Result<String, JsValue> {
    let rho: Vec<f64> = serde_json::from_str(rho_json).map_err(js_err)?;
    let rule: RuleSpec = serde_json::from_str(rule_json).map_err(js_err)?;
    to_json(&stopping_expectation(&rho, rule).map_err(js_err)?)
}
