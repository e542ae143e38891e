//! Dense linear algebra over `f64` and seeded random streams.
//!
//! Everything here is deterministic: the same inputs (and the same
//! [`RngStream`] position) produce bit-identical outputs on every platform.

mod eigen;
mod matrix;
mod rng;
mod vector;

pub use eigen::{power_iteration_extreme_eigs, ExtremeEigs, DEFAULT_EIG_TOL, EIG_ITERATION_CAP};
pub use matrix::{Cholesky, Lu, Mat64};
pub use rng::{gaussian, CovarianceSpec, RngStream, DRAWS_PER_NORMAL};
pub use vector::{dot, dot_slices, matvec, Vec64};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch: {rows}x{cols} matrix against length {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("numeric overflow in {0}")]
    NonFinite(&'static str),
    #[error("non-positive variance entry {value} at index {index}")]
    InvalidVariance { index: usize, value: f64 },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

pub type NumResult<T> = Result<T, NumError>;
