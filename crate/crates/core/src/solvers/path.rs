use nalgebra::{DMatrix, DVector};

use super::lasso::{CoordinateDescent, SignConstraints};
use crate::error::{Error, Result};

/// Geometric penalty grid for path computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            grid_size: 200,
            lambda_min_ratio: 1e-3,
            tol: 1e-9,
            max_iters: 100_000,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config(format!("grid size must be >= 2, got {}", self.grid_size)));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Config(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("path tolerance must be positive".into()));
        }
        Ok(())
    }

    /// `λ_max · ratio^{k/(G-1)}` for `k = 0..G`.
    pub fn grid(&self, lambda_max: f64) -> Vec<f64> {
        let last = (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|k| lambda_max * self.lambda_min_ratio.powf(k as f64 / last))
            .collect()
    }
}

/// When a path computation may stop early. Stopping never changes the entries
/// that are reported, only skips grid points that cannot affect them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStop {
    Full,
    /// After the grid point at which at least this many coordinates entered.
    AfterEntries(usize),
    /// Once coordinate `j` or `j + m` has entered for every `j < m`.
    AllPairsEntered,
}

/// First-entry record of each coordinate along a Lasso path.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryPath {
    /// Largest grid penalty at which the coordinate is nonzero; 0 if never.
    pub entry_lambda: Vec<f64>,
    /// Coefficient sign at first entry; 0 if never.
    pub entry_sign: Vec<i8>,
    /// Coordinates that entered, by decreasing entry penalty. Simultaneous
    /// entries are ordered by larger absolute coefficient, then lower index.
    pub entry_order: Vec<usize>,
    /// Grid index of first entry.
    pub entry_step: Vec<Option<usize>>,
    pub grid: Vec<f64>,
}

impl EntryPath {
    fn empty(m: usize, grid: Vec<f64>) -> Self {
        Self {
            entry_lambda: vec![0.0; m],
            entry_sign: vec![0; m],
            entry_order: Vec::new(),
            entry_step: vec![None; m],
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.entry_lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry_lambda.is_empty()
    }
}

/// Largest penalty at which some coordinate can move off zero, honoring the
/// sign restrictions (equal to `‖Xᵀy‖_∞` when unrestricted).
fn admissible_lambda_max(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    constraints: Option<&SignConstraints>,
) -> f64 {
    let corr = x.tr_mul(y);
    corr.iter()
        .enumerate()
        .map(|(j, &c)| match constraints.map_or(0, |s| s.as_slice()[j]) {
            1 => c.max(0.0),
            -1 => (-c).max(0.0),
            _ => c.abs(),
        })
        .fold(0.0, f64::max)
}

pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &PathConfig,
    constraints: Option<&SignConstraints>,
) -> Result<EntryPath> {
    lasso_path_until(x, y, cfg, constraints, PathStop::Full)
}

/// Warm-started Lasso solves down the geometric grid, recording when each
/// coordinate first becomes nonzero.
pub fn lasso_path_until(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &PathConfig,
    constraints: Option<&SignConstraints>,
    stop: PathStop,
) -> Result<EntryPath> {
    cfg.validate()?;
    let m = x.ncols();
    if let PathStop::AllPairsEntered = stop {
        if !m.is_multiple_of(2) {
            return Err(Error::Pairing(m));
        }
    }
    let mut cd = CoordinateDescent::new(x, y, constraints)?;
    let lambda_max = admissible_lambda_max(x, y, constraints);
    if lambda_max == 0.0 {
        return Ok(EntryPath::empty(m, vec![0.0; cfg.grid_size]));
    }
    let grid = cfg.grid(lambda_max);
    let mut path = EntryPath::empty(m, grid.clone());
    let mut entered = 0usize;
    let mut pairs_open = m / 2;

    for (step, &lambda) in grid.iter().enumerate() {
        cd.solve(lambda, cfg.tol, cfg.max_iters)?;
        let coef = cd.coef();
        let mut fresh: Vec<usize> = (0..m)
            .filter(|&j| path.entry_step[j].is_none() && coef[j] != 0.0)
            .collect();
        fresh.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
        for &j in &fresh {
            if matches!(stop, PathStop::AllPairsEntered) {
                let half = m / 2;
                let partner = if j < half { j + half } else { j - half };
                if path.entry_step[partner].is_none() {
                    pairs_open -= 1;
                }
            }
            path.entry_step[j] = Some(step);
            path.entry_lambda[j] = lambda;
            path.entry_sign[j] = if coef[j] > 0.0 { 1 } else { -1 };
            path.entry_order.push(j);
        }
        entered += fresh.len();
        let done = match stop {
            PathStop::Full => entered == m,
            PathStop::AfterEntries(k) => entered >= k,
            PathStop::AllPairsEntered => pairs_open == 0,
        };
        if done {
            break;
        }
    }
    Ok(path)
}
