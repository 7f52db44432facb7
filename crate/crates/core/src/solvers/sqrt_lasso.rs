use nalgebra::{DMatrix, DVector};

use super::lasso::{CoordinateDescent, SignConstraints};
use crate::error::{Error, Result};
use crate::rng::{normal_matrix, rng_from};

/// How the Monte Carlo draws of `‖Xᵀg‖_∞ / ‖g‖₂` are summarized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Mean,
    /// Empirical quantile, e.g. `0.95`.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtLassoConfig {
    pub kappa: f64,
    pub mc_reps: usize,
    pub rule: LambdaRule,
    /// Relative change of the effective Lasso penalty that ends the outer loop.
    pub rel_tol: f64,
    pub max_outer: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl SqrtLassoConfig {
    pub fn new(kappa: f64) -> Self {
        Self {
            kappa,
            ..Self::default()
        }
    }
}

impl Default for SqrtLassoConfig {
    fn default() -> Self {
        Self {
            kappa: 0.7,
            mc_reps: 500,
            rule: LambdaRule::Mean,
            rel_tol: 1e-6,
            max_outer: 500,
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

pub fn sqrt_lasso_lambda(x: &DMatrix<f64>, kappa: f64, mc_reps: usize, seed: u64) -> Result<f64> {
    sqrt_lasso_lambda_with(x, kappa, mc_reps, LambdaRule::Mean, seed)
}

/// `κ` times a Monte Carlo summary of `‖Xᵀg‖_∞ / ‖g‖₂` over standard
/// Gaussian `g ∈ ℝⁿ`.
pub fn sqrt_lasso_lambda_with(
    x: &DMatrix<f64>,
    kappa: f64,
    mc_reps: usize,
    rule: LambdaRule,
    seed: u64,
) -> Result<f64> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Config(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    if mc_reps < 100 {
        return Err(Error::Config(format!("need at least 100 Monte Carlo draws, got {mc_reps}")));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Dimension("empty design".into()));
    }
    let g = normal_matrix(&mut rng_from(seed), x.nrows(), mc_reps);
    let xtg = x.tr_mul(&g);
    let mut ratios: Vec<f64> = (0..mc_reps)
        .map(|r| xtg.column(r).amax() / g.column(r).norm())
        .collect();
    let summary = match rule {
        LambdaRule::Mean => ratios.iter().sum::<f64>() / mc_reps as f64,
        LambdaRule::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!("quantile must lie in (0, 1), got {q}")));
            }
            ratios.sort_by(f64::total_cmp);
            let idx = ((q * mc_reps as f64).ceil() as usize).clamp(1, mc_reps) - 1;
            ratios[idx]
        }
    };
    Ok(kappa * summary)
}

/// Minimize `‖y − Xb‖₂ + λ‖b‖₁` with `λ` from [`sqrt_lasso_lambda_with`].
pub fn sqrt_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &SqrtLassoConfig,
    constraints: Option<&SignConstraints>,
    seed: u64,
) -> Result<DVector<f64>> {
    let lambda = sqrt_lasso_lambda_with(x, cfg.kappa, cfg.mc_reps, cfg.rule, seed)?;
    sqrt_lasso_at(x, y, lambda, cfg, constraints)
}

/// Square-root Lasso at a given `λ`, by alternating a Lasso solve at penalty
/// `λ·σ` with `σ = ‖y − Xb‖₂`. Each half-step minimizes the jointly convex
/// `‖y − Xb‖²/(2σ) + σ/2 + λ‖b‖₁`, so the iteration is monotone.
pub fn sqrt_lasso_at(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    cfg: &SqrtLassoConfig,
    constraints: Option<&SignConstraints>,
) -> Result<DVector<f64>> {
    let mut cd = CoordinateDescent::new(x, y, constraints)?;
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(cd.into_coef());
    }
    let mut penalty = lambda * y_norm;
    for _ in 0..cfg.max_outer {
        cd.solve(penalty, cfg.tol, cfg.max_iters)?;
        let sigma = cd.residual().norm();
        if sigma <= 1e-12 * y_norm {
            return Err(Error::DegenerateFit(
                "square-root Lasso reached a zero residual".into(),
            ));
        }
        let next = lambda * sigma;
        let converged = (next - penalty).abs() <= cfg.rel_tol * penalty;
        penalty = next;
        if converged {
            cd.solve(penalty, cfg.tol, cfg.max_iters)?;
            return Ok(cd.into_coef());
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_outer,
        max_change: penalty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_vector;

    fn unit_columns(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut x = normal_matrix(&mut rng_from(seed), n, m);
        for mut c in x.column_iter_mut() {
            let norm = c.norm();
            c /= norm;
        }
        x
    }

    #[test]
    fn lambda_is_linear_in_kappa() {
        let x = unit_columns(30, 10, 1);
        let a = sqrt_lasso_lambda(&x, 0.6, 200, 5).unwrap();
        let b = sqrt_lasso_lambda(&x, 1.2, 200, 5).unwrap();
        assert_eq!(2.0 * a, b);
        assert_eq!(sqrt_lasso_lambda(&x, 0.0, 200, 5).unwrap(), 0.0);
    }

    #[test]
    fn single_column_lambda_bounds() {
        // one unit column: ‖Xᵀg‖/‖g‖ = |u·g|/‖g‖, whose mean is about
        // sqrt(2/π)/sqrt(n) and shrinks as n grows
        let mut prev = f64::INFINITY;
        for n in [5usize, 20, 80] {
            let x = unit_columns(n, 1, n as u64);
            let l = sqrt_lasso_lambda(&x, 1.0, 2000, 11).unwrap();
            assert!(l > 0.0 && l < 1.0);
            assert!(l < prev);
            let approx = (2.0 / std::f64::consts::PI).sqrt() / (n as f64).sqrt();
            assert!((l - approx).abs() < 0.25 * approx, "n = {n}: {l} vs {approx}");
            prev = l;
        }
    }

    #[test]
    fn quantile_rule_exceeds_mean() {
        let x = unit_columns(40, 20, 2);
        let mean = sqrt_lasso_lambda_with(&x, 1.0, 500, LambdaRule::Mean, 3).unwrap();
        let q95 = sqrt_lasso_lambda_with(&x, 1.0, 500, LambdaRule::Quantile(0.95), 3).unwrap();
        assert!(q95 > mean);
    }

    #[test]
    fn too_few_draws_is_a_config_error() {
        let x = unit_columns(10, 2, 1);
        assert!(matches!(sqrt_lasso_lambda(&x, 1.0, 50, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_response_gives_zero_fit() {
        let x = unit_columns(10, 3, 1);
        let y = DVector::zeros(10);
        let b = sqrt_lasso(&x, &y, &SqrtLassoConfig::new(0.5), None, 1).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn large_kappa_gives_zero_fit() {
        let x = unit_columns(50, 8, 4);
        let y = normal_vector(&mut rng_from(5), 50) + x.column(0) * 2.0;
        let cfg = SqrtLassoConfig::new(10.0);
        let lambda = sqrt_lasso_lambda(&x, 10.0, cfg.mc_reps, 6).unwrap();
        // zero is optimal iff λ >= ‖Xᵀy‖_∞ / ‖y‖₂
        assert!(lambda >= x.tr_mul(&y).amax() / y.norm());
        let b = sqrt_lasso(&x, &y, &cfg, None, 6).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_point_satisfies_sqrt_lasso_optimality() {
        let x = unit_columns(60, 10, 7);
        let y = normal_vector(&mut rng_from(8), 60) + x.column(2) * 4.0 - x.column(5) * 3.0;
        let lambda = 0.15;
        let b = sqrt_lasso_at(&x, &y, lambda, &SqrtLassoConfig::default(), None).unwrap();
        // subgradient: Xᵀr/‖r‖ ∈ λ ∂‖b‖₁
        let r = &y - &x * &b;
        let g = x.tr_mul(&r) / r.norm();
        for j in 0..10 {
            if b[j] != 0.0 {
                assert!((g[j] - lambda * b[j].signum()).abs() < 1e-5);
            } else {
                assert!(g[j].abs() <= lambda + 1e-5);
            }
        }
    }

    #[test]
    fn positive_solution_is_unchanged_by_positive_restriction() {
        let x = unit_columns(80, 6, 9);
        let y = normal_vector(&mut rng_from(10), 80) * 0.5
            + x.column(0) * 3.0
            + x.column(1) * 2.0
            + x.column(3) * 2.5;
        let cfg = SqrtLassoConfig::new(0.8);
        let free = sqrt_lasso(&x, &y, &cfg, None, 1).unwrap();
        assert!(free.iter().all(|&v| v >= 0.0), "{free}");
        let c = SignConstraints::new(vec![1; 6]).unwrap();
        let restricted = sqrt_lasso(&x, &y, &cfg, Some(&c), 1).unwrap();
        assert!((free - restricted).amax() < 1e-8);
    }
}
