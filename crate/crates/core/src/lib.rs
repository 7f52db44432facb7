//! Knockoff filter for controlled variable selection in Gaussian linear
//! regression.
//!
//! The crate covers the low-dimensional knockoff filter (`n >= 2p`) and the
//! high-dimensional screen-then-infer pipeline, where part of the data is used
//! to screen for a small submodel and the rest (optionally recycled together
//! with the screening rows) runs the knockoff selection step. Errors are
//! scored directionally: a selection counts as false when its estimated sign
//! disagrees with the true effect sign, including zero effects.
//!
//! Module map:
//!
//! - [`model`]: designs, responses, ground truth and row splits
//! - [`knockoffs`]: equicorrelated knockoff construction and recycling
//! - [`solvers`]: Lasso, Lasso path, square-root Lasso, OMP, least squares
//! - [`filter`]: knockoff statistics, thresholds, selection and sign estimates
//! - [`screening`]: row splits, random rotations and Lasso-path screening
//! - [`pipeline`]: end-to-end procedures and the least-squares + BH baseline
//! - [`metrics`]: FDP, directional FDP, power
//! - [`simulate`]: synthetic designs and the multi-trial experiment harness
//! - [`oracles`]: brute-force checkers used by tests and `verify`

pub mod error;
pub mod filter;
pub mod io;
pub mod knockoffs;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod oracles;
pub mod pipeline;
pub mod rng;
pub mod screening;
pub mod simulate;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{Design, LinearModelSpec, Response, SplitData};
