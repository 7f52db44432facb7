//! Brute-force verifiers that share no code path with the procedures they
//! check: exact enumeration for the Bernoulli stopping-time bound, loop-based
//! Gram residuals, swap antisymmetry, closed-form scalar Lasso, and a
//! two-sample Kolmogorov–Smirnov test.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{StatVector, Statistic};
use crate::knockoffs::KnockoffPair;
use crate::solvers::PathConfig;

/// Reverse-time stopping rules. At step `j` (from `n` down to 1) a rule sees
/// only `S_j = B_1 + … + B_j` and the tail `B_{j+1}, …, B_n`; `J` is the first
/// step at which it fires, or 0 if it never does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// `J = n`.
    Always,
    /// `J = j0` (clamped to `n`).
    Fixed(usize),
    /// Knockoff+-style: stop once `(1 + S_j) / max(j − S_j, 1) <= level`.
    RatioBelow(f64),
    /// Stop once `S_j <= intercept + slope · j`.
    Linear { intercept: f64, slope: f64 },
    /// Stop once the tail holds at least this many ones.
    TailOnes(usize),
}

impl StoppingRule {
    fn fires(&self, j: usize, n: usize, s_j: usize, tail: &[u8]) -> bool {
        match *self {
            StoppingRule::Always => true,
            StoppingRule::Fixed(j0) => j == j0.min(n),
            StoppingRule::RatioBelow(level) => {
                (1 + s_j) as f64 / ((j - s_j).max(1) as f64) <= level
            }
            StoppingRule::Linear { intercept, slope } => s_j as f64 <= intercept + slope * j as f64,
            StoppingRule::TailOnes(k) => tail.iter().filter(|&&b| b == 1).count() >= k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliStoppingInstance {
    pub rho: Vec<f64>,
    pub rho_floor: f64,
    pub rule: StoppingRule,
}

impl BernoulliStoppingInstance {
    pub fn bound(&self) -> f64 {
        1.0 / self.rho_floor
    }

    /// Random instance with `1 <= n <= n_max`, `ρ_i ∈ [rho_floor, 1]` and a
    /// random rule from the threshold family.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_max: usize, rho_floor: f64) -> Self {
        let n = rng.random_range(1..=n_max);
        let rho = (0..n).map(|_| rng.random_range(rho_floor..=1.0)).collect();
        let rule = match rng.random_range(0..5) {
            0 => StoppingRule::Always,
            1 => StoppingRule::Fixed(rng.random_range(0..=n)),
            2 => StoppingRule::RatioBelow(rng.random_range(0.05..1.5)),
            3 => StoppingRule::Linear {
                intercept: rng.random_range(-1.0..3.0),
                slope: rng.random_range(0.0..1.0),
            },
            _ => StoppingRule::TailOnes(rng.random_range(0..=n)),
        };
        Self { rho, rho_floor, rule }
    }
}

pub const LEMMA1_MAX_N: usize = 16;

/// `E[(1 + J) / (1 + B_1 + … + B_J)]` by weighting all `2^n` outcomes.
pub fn lemma1_exact(inst: &BernoulliStoppingInstance) -> Result<f64> {
    let n = inst.rho.len();
    if n > LEMMA1_MAX_N {
        return Err(Error::Config(format!("enumeration limited to n <= {LEMMA1_MAX_N}, got {n}")));
    }
    if inst.rho.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Config("success probabilities must lie in (0, 1]".into()));
    }
    let mut total = 0.0;
    let mut b = vec![0u8; n];
    let mut prefix = vec![0usize; n + 1];
    for mask in 0u32..(1u32 << n) {
        let mut weight = 1.0;
        for i in 0..n {
            b[i] = ((mask >> i) & 1) as u8;
            weight *= if b[i] == 1 { inst.rho[i] } else { 1.0 - inst.rho[i] };
            prefix[i + 1] = prefix[i] + b[i] as usize;
        }
        if weight == 0.0 {
            continue;
        }
        let stop = (1..=n)
            .rev()
            .find(|&j| inst.rule.fires(j, n, prefix[j], &b[j..]))
            .unwrap_or(0);
        total += weight * (1 + stop) as f64 / (1 + prefix[stop]) as f64;
    }
    Ok(total)
}

/// Residuals of the four Gram identities of a knockoff pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramReport {
    /// `max |X̃ᵀX̃ − XᵀX|`
    pub tilde_gram: f64,
    /// `max |XᵀX̃ − (XᵀX − diag s)|`
    pub cross: f64,
    /// `max |(X − X̃)ᵀ(X − X̃) − 2 diag s|`
    pub difference: f64,
    /// `max |(X − X̃)ᵀ(X + X̃)|`
    pub orthogonality: f64,
}

impl GramReport {
    pub fn max(&self) -> f64 {
        self.tilde_gram.max(self.cross).max(self.difference).max(self.orthogonality)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tilde_gram, self.cross, self.difference, self.orthogonality]
    }
}

fn col_dot(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..a.nrows() {
        acc += a[(r, i)] * b[(r, j)];
    }
    acc
}

/// Gram residuals by explicit loops over entries, independent of the matrix
/// products used during construction.
#[allow(clippy::needless_range_loop)]
pub fn gram_check(pair: &KnockoffPair) -> GramReport {
    let x = pair.x().values();
    let xt = pair.x_tilde().values();
    let s = pair.s();
    let p = x.ncols();
    let mut rep = GramReport { tilde_gram: 0.0, cross: 0.0, difference: 0.0, orthogonality: 0.0 };
    for i in 0..p {
        for j in 0..p {
            let sigma = col_dot(x, i, x, j);
            let d_ij = if i == j { s[i] } else { 0.0 };
            let tt = col_dot(xt, i, xt, j);
            let xtt = col_dot(x, i, xt, j);
            let txt = col_dot(xt, i, x, j);
            // (X − X̃)ᵀ(X − X̃) and (X − X̃)ᵀ(X + X̃) expanded entrywise
            let diff = sigma - xtt - txt + tt;
            let orth = sigma + xtt - txt - tt;
            rep.tilde_gram = rep.tilde_gram.max((tt - sigma).abs());
            rep.cross = rep.cross.max((xtt - (sigma - d_ij)).abs());
            rep.difference = rep.difference.max((diff - 2.0 * d_ij).abs());
            rep.orthogonality = rep.orthogonality.max(orth.abs());
        }
    }
    rep
}

/// `max` deviation among `M_{j,k}, M_{j,k+p}, M_{j+p,k}, M_{j+p,k+p}` for
/// `j ≠ k`, and between `M_{j,j}` and `M_{j+p,j+p}`, where
/// `M = [X X̃]ᵀ Θ [X X̃]`.
pub fn pairwise_exchangeability_residual(pair: &KnockoffPair, theta: &DMatrix<f64>) -> f64 {
    let a = pair.augmented();
    let m = a.transpose() * theta * &a;
    let p = pair.p();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        worst = worst.max((m[(j, j)] - m[(j + p, j + p)]).abs());
        for k in 0..p {
            if j == k {
                continue;
            }
            let v = m[(j, k)];
            for w in [m[(j, k + p)], m[(j + p, k)], m[(j + p, k + p)]] {
                worst = worst.max((v - w).abs());
            }
        }
    }
    worst
}

/// Swap feature and knockoff columns for every index in `swap`.
pub fn swap_columns(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>, swap: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = x.clone();
    let mut b = x_tilde.clone();
    for &j in swap {
        a.set_column(j, &x_tilde.column(j));
        b.set_column(j, &x.column(j));
    }
    (a, b)
}

/// Multiplicative width of one step of the path grid, if the statistic is
/// grid based.
fn grid_step(stat: &Statistic) -> Option<f64> {
    match stat {
        Statistic::LassoEntry(cfg) => Some(step_ratio(cfg)),
        _ => None,
    }
}

fn step_ratio(cfg: &PathConfig) -> f64 {
    cfg.lambda_min_ratio.powf(-1.0 / (cfg.grid_size - 1) as f64)
}

/// Whether `got` equals `want` within `tol`, or, for grid statistics, lies
/// one grid step away with the same sign.
fn within(got: f64, want: f64, tol: f64, step: Option<f64>) -> bool {
    if (got - want).abs() <= tol {
        return true;
    }
    match step {
        Some(r) if got != 0.0 && want != 0.0 && got.signum() == want.signum() => {
            let (hi, lo) = if got.abs() > want.abs() { (got.abs(), want.abs()) } else { (want.abs(), got.abs()) };
            hi <= lo * r * (1.0 + 1e-9)
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub passed: bool,
    pub original: StatVector,
    pub swapped: StatVector,
}

/// Recompute `W` after swapping the columns in `swap`; `W_j` must flip for
/// `j` in the set and stay put otherwise.
pub fn swap_antisymmetry(
    stat: &Statistic,
    x: &DMatrix<f64>,
    x_tilde: &DMatrix<f64>,
    y: &DVector<f64>,
    swap: &[usize],
    tol: f64,
) -> Result<SwapOutcome> {
    let original = stat.compute(x, x_tilde, y, None, 0)?;
    let (xs, xts) = swap_columns(x, x_tilde, swap);
    let swapped = stat.compute(&xs, &xts, y, None, 0)?;
    let step = grid_step(stat);
    let passed = (0..original.len()).all(|j| {
        let want = if swap.contains(&j) { -original.w[j] } else { original.w[j] };
        within(swapped.w[j], want, tol, step)
    });
    Ok(SwapOutcome { passed, original, swapped })
}

pub fn swap_antisymmetry_check(
    stat: &Statistic,
    x: &DMatrix<f64>,
    x_tilde: &DMatrix<f64>,
    y: &DVector<f64>,
    swap: &[usize],
    tol: f64,
) -> Result<bool> {
    Ok(swap_antisymmetry(stat, x, x_tilde, y, swap, tol)?.passed)
}

/// Lasso on one unit-norm column: `sign(xᵀy) · max(|xᵀy| − λ, 0)`.
pub fn scalar_lasso_oracle(x: &DVector<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let z: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    if z.abs() <= lambda {
        0.0
    } else {
        z.signum() * (z.abs() - lambda)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_tail(lambda))
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Hand-enumerated Benjamini–Hochberg cases: `(p-values, q, rejected)`.
pub const BH_CASES: [(&[f64], f64, &[usize]); 10] = [
    (&[0.01, 0.04, 0.5], 0.1, &[0, 1]),
    (&[1.0, 1.0, 1.0], 0.1, &[]),
    (&[0.05], 0.1, &[0]),
    (&[0.04, 0.045, 0.9], 0.1, &[0, 1]),
    (&[0.2, 0.01, 0.03, 0.5], 0.2, &[1, 2]),
    (&[0.001, 0.002, 0.003, 0.004, 0.005], 0.05, &[0, 1, 2, 3, 4]),
    (&[0.3, 0.02], 0.05, &[1]),
    (&[0.06, 0.07, 0.08], 0.2, &[0, 1, 2]),
    (&[0.5, 0.6, 0.7, 0.8], 0.1, &[]),
    (&[0.011, 0.019, 0.029, 0.039, 0.9, 0.95], 0.06, &[0, 1, 2, 3]),
];

/// One named check in the verification battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The oracle battery run by `verify`: every check is deterministic in `seed`.
pub fn run_battery(seed: u64) -> Vec<CheckOutcome> {
    battery::run(seed)
}

mod battery {
    use super::*;
    use crate::knockoffs::{construct_knockoffs, equicorrelated_s};
    use crate::linalg::gram;
    use crate::model::{normalize_columns, Design};
    use crate::pipeline::bh_stepup;
    use crate::rng::{derive_seed, normal_matrix, normal_vector, rng_from};
    use crate::solvers::{kkt_violation, lasso, LassoConfig};

    fn outcome(name: &str, res: Result<(bool, String)>) -> CheckOutcome {
        match res {
            Ok((passed, detail)) => CheckOutcome { name: name.into(), passed, detail },
            Err(e) => CheckOutcome { name: name.into(), passed: false, detail: format!("error: {e}") },
        }
    }

    fn random_pair(n: usize, p: usize, seed: u64) -> Result<KnockoffPair> {
        let x = normalize_columns(&Design::new(normal_matrix(&mut rng_from(seed), n, p))?)?;
        let s = equicorrelated_s(&gram(x.values()))?;
        construct_knockoffs(&x, &s, derive_seed(seed, 1))
    }

    fn gram_contract(seed: u64) -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for t in 0..100 {
            let pair = random_pair(100, 20, derive_seed(seed, t))?;
            worst = worst.max(gram_check(&pair).max());
        }
        Ok((worst <= 1e-8, format!("max residual {worst:.3e} over 100 designs")))
    }

    fn gram_sensitivity(seed: u64) -> Result<(bool, String)> {
        let pair = random_pair(40, 8, seed)?;
        let mut xt = pair.x_tilde().values().clone();
        xt[(3, 2)] += 1e-3;
        let corrupted = KnockoffPair::from_parts(pair.x().clone(), Design::new(xt)?, pair.s().to_vec())?;
        let r = gram_check(&corrupted).max();
        Ok((r > 1e-4, format!("perturbed residual {r:.3e}")))
    }

    fn lemma1_examples() -> Result<(bool, String)> {
        let two = lemma1_exact(&BernoulliStoppingInstance {
            rho: vec![0.5, 0.5],
            rho_floor: 0.5,
            rule: StoppingRule::Always,
        })?;
        let ones = lemma1_exact(&BernoulliStoppingInstance {
            rho: vec![1.0; 6],
            rho_floor: 1.0,
            rule: StoppingRule::RatioBelow(0.5),
        })?;
        let mut ok = (two - 1.75).abs() < 1e-15 && (ones - 1.0).abs() < 1e-15;
        for k in 1..=20 {
            let r = k as f64 / 20.0;
            let v = lemma1_exact(&BernoulliStoppingInstance {
                rho: vec![r],
                rho_floor: r,
                rule: StoppingRule::Always,
            })?;
            ok &= (v - (2.0 - r)).abs() < 1e-14 && v <= 1.0 / r + 1e-12;
        }
        Ok((ok, format!("n=2 expectation {two}, all-ones {ones}")))
    }

    fn lemma1_sweep(seed: u64) -> Result<(bool, String)> {
        let mut rng = rng_from(seed);
        let mut worst_gap = f64::NEG_INFINITY;
        for i in 0..500 {
            let floor = [0.3, 0.5, 0.7][i % 3];
            let inst = BernoulliStoppingInstance::random(&mut rng, 12, floor);
            let v = lemma1_exact(&inst)?;
            worst_gap = worst_gap.max(v - inst.bound());
        }
        Ok((worst_gap <= 1e-12, format!("max expectation minus bound {worst_gap:.3e}")))
    }

    fn antisymmetry(seed: u64) -> Result<(bool, String)> {
        let mut failures = 0;
        let stats = [
            Statistic::CoefDiff(LassoConfig::new(0.3)),
            Statistic::LassoEntry(PathConfig::default()),
        ];
        for t in 0..40u64 {
            let mut rng = rng_from(derive_seed(seed, 100 + t));
            let pair = random_pair(50, 8, derive_seed(seed, 200 + t))?;
            let mut beta = DVector::zeros(8);
            beta[1] = 3.0;
            beta[5] = -2.0;
            let y = pair.x().values() * &beta + normal_vector(&mut rng, 50);
            let swap: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.5)).collect();
            let stat = &stats[(t % 2) as usize];
            if !swap_antisymmetry_check(stat, pair.x().values(), pair.x_tilde().values(), &y, &swap, 1e-8)? {
                failures += 1;
            }
        }
        Ok((failures == 0, format!("{failures} of 40 swap instances failed")))
    }

    fn solvers(seed: u64) -> Result<(bool, String)> {
        let mut worst_kkt: f64 = 0.0;
        let mut worst_scalar: f64 = 0.0;
        for t in 0..30u64 {
            let mut rng = rng_from(derive_seed(seed, 300 + t));
            let x = normal_matrix(&mut rng, 30, 12);
            let y = normal_vector(&mut rng, 30);
            let lambda = 0.2 * x.tr_mul(&y).amax();
            let b = lasso(&x, &y, &LassoConfig::new(lambda), None)?;
            worst_kkt = worst_kkt.max(kkt_violation(&x, &y, &b, lambda, None));
            let col = normal_vector(&mut rng, 30).normalize();
            let xc = DMatrix::from_column_slice(30, 1, col.as_slice());
            let lam1 = rng.random_range(0.0..2.0);
            let b1 = lasso(&xc, &y, &LassoConfig::new(lam1), None)?;
            worst_scalar = worst_scalar.max((b1[0] - scalar_lasso_oracle(&col, &y, lam1)).abs());
        }
        Ok((
            worst_kkt <= 1e-6 && worst_scalar <= 1e-8,
            format!("max KKT violation {worst_kkt:.3e}, scalar mismatch {worst_scalar:.3e}"),
        ))
    }

    fn bh_table() -> Result<(bool, String)> {
        let mut bad = Vec::new();
        for (i, (pv, q, want)) in BH_CASES.iter().enumerate() {
            if bh_stepup(pv, *q)?.as_slice() != *want {
                bad.push(i);
            }
        }
        Ok((bad.is_empty(), format!("mismatched cases {bad:?}")))
    }

    pub(super) fn run(seed: u64) -> Vec<CheckOutcome> {
        vec![
            outcome("gram-contract", gram_contract(derive_seed(seed, 1))),
            outcome("gram-detector", gram_sensitivity(derive_seed(seed, 2))),
            outcome("stopping-time-examples", lemma1_examples()),
            outcome("stopping-time-sweep", lemma1_sweep(derive_seed(seed, 3))),
            outcome("swap-antisymmetry", antisymmetry(derive_seed(seed, 4))),
            outcome("solver-certificates", solvers(derive_seed(seed, 5))),
            outcome("bh-table", bh_table()),
        ]
    }
}
