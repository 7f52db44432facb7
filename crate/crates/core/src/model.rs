//! Shared data types: designs, responses, the ground-truth linear model and
//! row splits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense `n × p` design, rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    values: DMatrix<f64>,
    column_norms: Vec<f64>,
    normalized: bool,
}

impl Design {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!("design must be non-empty, got {n}x{p}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos % n,
                column: pos / n,
                message: "non-finite design entry".into(),
            });
        }
        let column_norms = values.column_iter().map(|c| c.norm()).collect();
        Ok(Self {
            values,
            column_norms,
            normalized: false,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Norms the columns had before normalization (or their current norms
    /// for a design that was never normalized).
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn normalize(&self) -> Result<Design> {
        normalize_columns(self)
    }

    /// Column subset in the given order. Normalization status carries over
    /// since each column is unchanged.
    pub fn select_columns(&self, cols: &[usize]) -> Design {
        let values = self.values.select_columns(cols.iter());
        Design {
            values,
            column_norms: cols.iter().map(|&j| self.column_norms[j]).collect(),
            normalized: self.normalized,
        }
    }

    /// Row subset in the given order; the result is no longer normalized.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Design> {
        Design::new(self.values.select_rows(rows.iter()))
    }
}

/// Divide each column by its Euclidean norm. Zero columns are rejected.
pub fn normalize_columns(x: &Design) -> Result<Design> {
    let mut values = x.values.clone();
    let mut norms = Vec::with_capacity(x.ncols());
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn { column: j });
        }
        col /= norm;
        norms.push(norm);
    }
    Ok(Design {
        values,
        column_norms: norms,
        normalized: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    values: DVector<f64>,
}

impl Response {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row,
                column: 0,
                message: "non-finite response entry".into(),
            });
        }
        Ok(Self { values })
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_matches(&self, x: &Design) -> Result<()> {
        if self.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "response has {} entries but design has {} rows",
                self.len(),
                x.nrows()
            )));
        }
        Ok(())
    }
}

/// Ground truth `y = Xβ + σ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelSpec {
    beta: Vec<f64>,
    sigma: f64,
    support: Vec<usize>,
    strong: Vec<usize>,
}

impl LinearModelSpec {
    pub fn new(beta: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise level must be finite and nonnegative, got {sigma}")));
        }
        let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        Ok(Self {
            strong: support.clone(),
            beta,
            sigma,
            support,
        })
    }

    /// Mark a subset of the support as the strong signals used for
    /// restricted power.
    pub fn with_strong(mut self, strong: Vec<usize>) -> Result<Self> {
        if let Some(&j) = strong.iter().find(|&&j| j >= self.beta.len() || self.beta[j] == 0.0) {
            return Err(Error::Config(format!("strong index {j} is not in the support")));
        }
        let mut strong = strong;
        strong.sort_unstable();
        self.strong = strong;
        Ok(self)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn strong(&self) -> &[usize] {
        &self.strong
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn true_signs(&self) -> Vec<i8> {
        self.beta.iter().map(|&b| sign_of(b)).collect()
    }
}

pub fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Disjoint row partition `(part0, part1)` with `n0 + n1 = n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub x0: Design,
    pub y0: Response,
    pub x1: Design,
    pub y1: Response,
}

impl SplitData {
    pub fn n0(&self) -> usize {
        self.x0.nrows()
    }

    pub fn n1(&self) -> usize {
        self.x1.nrows()
    }
}
