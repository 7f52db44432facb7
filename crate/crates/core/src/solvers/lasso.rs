use nalgebra::{DMatrix, DVector};

use super::soft_threshold;
use crate::error::{Error, Result};

/// Per-coordinate sign requirements: `+1` forces `b_j >= 0`, `-1` forces
/// `b_j <= 0`, `0` leaves the coordinate free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignConstraints {
    required_sign: Vec<i8>,
}

impl SignConstraints {
    pub fn new(required_sign: Vec<i8>) -> Result<Self> {
        if let Some(v) = required_sign.iter().find(|v| !matches!(v, -1..=1)) {
            return Err(Error::Config(format!("sign constraint must be -1, 0 or 1, got {v}")));
        }
        Ok(Self { required_sign })
    }

    pub fn unconstrained(m: usize) -> Self {
        Self {
            required_sign: vec![0; m],
        }
    }

    /// The same sign on a feature and on its knockoff: `(signs, signs)`.
    pub fn paired(signs: &[i8]) -> Result<Self> {
        let mut both = signs.to_vec();
        both.extend_from_slice(signs);
        Self::new(both)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.required_sign
    }

    pub fn len(&self) -> usize {
        self.required_sign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.required_sign.is_empty()
    }

    pub fn project(&self, j: usize, value: f64) -> f64 {
        match self.required_sign[j] {
            1 => value.max(0.0),
            -1 => value.min(0.0),
            _ => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Cap on coordinate-descent sweeps.
    pub max_iters: usize,
    /// Convergence threshold on the largest per-sweep change `|Δb_j|·‖X_j‖`.
    pub tol: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iters: 100_000,
            tol: 1e-10,
        }
    }
}

/// Cyclic coordinate descent for `½‖y − Xb‖² + λ‖b‖₁`, keeping the residual
/// up to date so warm starts across penalties are cheap.
#[derive(Debug, Clone)]
pub struct CoordinateDescent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    col_norm: Vec<f64>,
    col_sq: Vec<f64>,
    constraints: Option<SignConstraints>,
    coef: DVector<f64>,
    resid: DVector<f64>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        constraints: Option<&SignConstraints>,
    ) -> Result<Self> {
        let (n, m) = x.shape();
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "response has {} entries, design has {n} rows",
                y.len()
            )));
        }
        if let Some(c) = constraints {
            if c.len() != m {
                return Err(Error::Dimension(format!(
                    "{} sign constraints for {m} coordinates",
                    c.len()
                )));
            }
        }
        let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self {
            x,
            y,
            col_norm: col_sq.iter().map(|v| v.sqrt()).collect(),
            col_sq,
            constraints: constraints.cloned(),
            coef: DVector::zeros(m),
            resid: y.clone(),
        })
    }

    pub fn coef(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.resid
    }

    pub fn into_coef(self) -> DVector<f64> {
        self.coef
    }

    pub fn objective(&self, lambda: f64) -> f64 {
        0.5 * self.resid.norm_squared() + lambda * self.coef.lp_norm(1)
    }

    fn refresh_residual(&mut self) {
        self.resid = self.y - self.x * &self.coef;
    }

    /// Exact minimization over coordinate `j`; returns the weighted change.
    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let sq = self.col_sq[j];
        if sq == 0.0 {
            return 0.0;
        }
        let xj = self.x.column(j);
        let old = self.coef[j];
        let rho = xj.dot(&self.resid) + sq * old;
        let mut new = soft_threshold(rho, lambda) / sq;
        if let Some(c) = &self.constraints {
            new = c.project(j, new);
        }
        if new == old {
            return 0.0;
        }
        self.resid.axpy(old - new, &xj, 1.0);
        self.coef[j] = new;
        (new - old).abs() * self.col_norm[j]
    }

    /// One pass over all coordinates in index order.
    pub fn sweep(&mut self, lambda: f64) -> f64 {
        (0..self.coef.len()).fold(0.0, |acc, j| acc.max(self.update(j, lambda)))
    }

    fn sweep_active(&mut self, lambda: f64, active: &[usize]) -> f64 {
        active
            .iter()
            .fold(0.0, |acc, &j| acc.max(self.update(j, lambda)))
    }

    /// Iterate to a fixed point at penalty `lambda`, starting from the current
    /// coefficients. Full sweeps alternate with sweeps over the active set;
    /// convergence is declared only after a full sweep below `tol`.
    pub fn solve(&mut self, lambda: f64, tol: f64, max_iters: usize) -> Result<usize> {
        self.refresh_residual();
        let mut iters = 0;
        loop {
            let change = self.sweep(lambda);
            iters += 1;
            if change < tol {
                return Ok(iters);
            }
            let active: Vec<usize> = (0..self.coef.len()).filter(|&j| self.coef[j] != 0.0).collect();
            let mut inner = f64::INFINITY;
            while inner >= tol {
                if iters >= max_iters {
                    return Err(Error::Convergence {
                        iterations: iters,
                        max_change: inner.min(change),
                    });
                }
                inner = self.sweep_active(lambda, &active);
                iters += 1;
            }
            if iters >= max_iters {
                return Err(Error::Convergence {
                    iterations: iters,
                    max_change: change,
                });
            }
        }
    }
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * b).norm_squared() + lambda * b.lp_norm(1)
}

/// Lasso solution at penalty `cfg.lambda`, optionally sign restricted.
pub fn lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &LassoConfig,
    constraints: Option<&SignConstraints>,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let mut cd = CoordinateDescent::new(x, y, constraints)?;
    cd.solve(cfg.lambda, cfg.tol, cfg.max_iters)?;
    Ok(cd.into_coef())
}

/// Largest violation of the (sign-restricted) Lasso optimality conditions.
///
/// Free coordinates need `|X_jᵀr| <= λ` when zero and `X_jᵀr = λ sign(b_j)`
/// when active; a coordinate pinned at zero by a `+1` (`-1`) restriction only
/// needs `X_jᵀr <= λ` (`>= -λ`).
pub fn kkt_violation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    b: &DVector<f64>,
    lambda: f64,
    constraints: Option<&SignConstraints>,
) -> f64 {
    let r = y - x * b;
    let grad = x.tr_mul(&r);
    (0..b.len())
        .map(|j| {
            let g = grad[j];
            let sign = constraints.map_or(0, |c| c.as_slice()[j]);
            if b[j] != 0.0 {
                (g - lambda * b[j].signum()).abs()
            } else {
                match sign {
                    1 => (g - lambda).max(0.0),
                    -1 => (-g - lambda).max(0.0),
                    _ => (g.abs() - lambda).max(0.0),
                }
            }
        })
        .fold(0.0, f64::max)
}
