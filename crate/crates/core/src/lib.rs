//! Riemannian geometry for symmetric positive definite (SPD) matrices:
//! metrics and divergences, Karcher means, the DPLM supervised
//! dimensionality-reduction algorithm on the Stiefel manifold, MDM/FGMDM
//! classifiers, and a band-pass/window/covariance preprocessing pipeline for
//! multichannel time-series trials.

// Validations use `!(x > 0.0)`-style comparisons on purpose: they must
// reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod dplm;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pipeline;

pub use error::{Error, Result};
pub use linalg::{SpdMatrix, StiefelPoint, SymMatrix};
