//! Error type shared by every module of the crate.

use crate::linalg::SpdMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:.3e} exceeds {tolerance:.0e}"
    )]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error(
        "matrix is not positive definite: min eigenvalue {min_eigenvalue:.6e}, \
         max eigenvalue {max_eigenvalue:.6e}"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error(
        "matrix columns are not orthonormal: ||U'U - I||_F = {defect:.3e} exceeds {tolerance:.0e}"
    )]
    NotOrthonormal { defect: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix entries must be finite")]
    NonFiniteEntries,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(
        "mean iteration did not converge after {iterations} iterations \
         (tangent residual {residual:.3e})"
    )]
    MeanDidNotConverge {
        iterations: usize,
        residual: f64,
        /// Last iterate, usable as a degraded result by callers that choose to.
        last_iterate: Box<SpdMatrix>,
    },

    #[error("class {label} has {size} samples but at least {required} are required")]
    ClassTooSmall {
        label: u32,
        size: usize,
        required: usize,
    },

    #[error("projected matrix for sample {owner}, neighbor slot {neighbor} is singular")]
    ProjectedSingular { owner: usize, neighbor: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid frequency band: {0}")]
    InvalidBand(String),

    #[error("signal too short: {samples} samples, need more than {required}")]
    SignalTooShort { samples: usize, required: usize },

    #[error("window [{start}s, {end}s) lies outside the trial")]
    WindowOutOfRange { start: f64, end: f64 },

    #[error("covariance is not positive definite (rank deficient); use nonzero shrinkage")]
    RankDeficientCovariance,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("format error: {0}")]
    Format(String),
}
