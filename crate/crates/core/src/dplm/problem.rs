//! The distance-preservation objective and its Euclidean gradient.
//!
//! For a projection `U` the objective sums, over every sample `i` and each of
//! its `K` neighbors `j`, the absolute change of the LogDet divergence
//! between the neighbor and the neighborhood mean under congruence by `U`:
//!
//! ```text
//! H(U) = sum_i sum_j | J(X_ij, M_i) - J(U'X_ij U, U'M_i U) |
//! ```
//!
//! Input-space divergences are constants of the optimization; they are
//! computed once at construction and cached.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use super::{LabeledSample, Neighborhood};
use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg::StiefelPoint;

struct NeighborhoodTerm {
    owner: usize,
    mean: DMatrix<f64>,
    neighbors: Vec<DMatrix<f64>>,
    /// Cached input-space divergences `J(X_ij, M_i)`, one per neighbor.
    original: Vec<f64>,
}

/// A prepared instance of the reduction objective.
pub struct DplmProblem {
    dim: usize,
    terms: Vec<NeighborhoodTerm>,
}

impl DplmProblem {
    pub fn new(samples: &[LabeledSample], neighborhoods: &[Neighborhood]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or(Error::EmptyInput("problem needs samples"))?;
        let dim = first.matrix.dim();
        for s in samples {
            if s.matrix.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.matrix.dim(),
                });
            }
        }
        let mut terms = Vec::with_capacity(neighborhoods.len());
        for nb in neighborhoods {
            if nb.local_mean.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: nb.local_mean.dim(),
                });
            }
            let mean = nb.local_mean.matrix().clone();
            let mut neighbors = Vec::with_capacity(nb.neighbor_indices.len());
            let mut original = Vec::with_capacity(nb.neighbor_indices.len());
            for &j in &nb.neighbor_indices {
                let x = samples
                    .get(j)
                    .ok_or_else(|| {
                        Error::Format(format!("neighborhood references missing sample {j}"))
                    })?
                    .matrix
                    .matrix()
                    .clone();
                original.push(geometry::jbld_raw(&x, &mean)?);
                neighbors.push(x);
            }
            terms.push(NeighborhoodTerm {
                owner: nb.owner_index,
                mean,
                neighbors,
                original,
            });
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of (sample, neighbor) pairs in the double sum.
    pub fn pair_count(&self) -> usize {
        self.terms.iter().map(|t| t.neighbors.len()).sum()
    }

    /// Objective at a feasible point.
    pub fn objective(&self, u: &StiefelPoint) -> Result<f64> {
        self.check_rows(u)?;
        self.objective_raw(u.matrix())
    }

    /// Euclidean gradient at a feasible point, an `n x m` matrix.
    pub fn gradient(&self, u: &StiefelPoint) -> Result<DMatrix<f64>> {
        self.check_rows(u)?;
        self.gradient_raw(u.matrix())
    }

    fn check_rows(&self, u: &StiefelPoint) -> Result<()> {
        if u.rows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: u.rows(),
            });
        }
        Ok(())
    }

    /// Objective on a raw matrix. The expression is well defined for any `U`
    /// whose congruences stay positive definite, which is what makes
    /// finite-difference probes of the gradient possible.
    pub fn objective_raw(&self, u: &DMatrix<f64>) -> Result<f64> {
        Ok(self.evaluate(u, false)?.0)
    }

    /// Euclidean gradient on a raw matrix.
    pub fn gradient_raw(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(u, true)?.1.expect("gradient requested"))
    }

    /// One pass over all pairs: objective and optionally the gradient.
    pub(crate) fn evaluate(
        &self,
        u: &DMatrix<f64>,
        with_gradient: bool,
    ) -> Result<(f64, Option<DMatrix<f64>>)> {
        if u.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: u.nrows(),
            });
        }
        // Terms evaluate in parallel and reduce in input order, so repeated
        // runs are bit-identical regardless of thread count.
        let partials: Vec<Result<(f64, Option<DMatrix<f64>>)>> = self
            .terms
            .par_iter()
            .map(|term| term.evaluate(u, with_gradient))
            .collect();
        let mut objective = 0.0;
        let mut gradient = with_gradient.then(|| DMatrix::zeros(u.nrows(), u.ncols()));
        for partial in partials {
            let (h, g) = partial?;
            objective += h;
            if let (Some(total), Some(part)) = (gradient.as_mut(), g) {
                *total += part;
            }
        }
        Ok((objective, gradient))
    }
}

impl NeighborhoodTerm {
    fn evaluate(
        &self,
        u: &DMatrix<f64>,
        with_gradient: bool,
    ) -> Result<(f64, Option<DMatrix<f64>>)> {
        let singular = |slot: usize| Error::ProjectedSingular {
            owner: self.owner,
            neighbor: slot,
        };

        let mu = &self.mean * u;
        let mp = u.transpose() * &mu;
        let mp_chol = Cholesky::new(mp.clone()).ok_or_else(|| singular(0))?;
        let mp_logdet = chol_logdet(&mp_chol);
        let mp_inv = with_gradient.then(|| mp_chol.inverse());

        let mut objective = 0.0;
        let mut gradient = with_gradient.then(|| DMatrix::zeros(u.nrows(), u.ncols()));

        for (slot, x) in self.neighbors.iter().enumerate() {
            let xu = x * u;
            let xp = u.transpose() * &xu;
            let xp_chol = Cholesky::new(xp.clone()).ok_or_else(|| singular(slot))?;
            let sp = (&xp + &mp) * 0.5;
            let sp_chol = Cholesky::new(sp).ok_or_else(|| singular(slot))?;

            let projected =
                (chol_logdet(&sp_chol) - 0.5 * (chol_logdet(&xp_chol) + mp_logdet)).max(0.0);
            let diff = self.original[slot] - projected;
            objective += diff.abs();

            if let Some(grad) = gradient.as_mut() {
                let sign = if diff == 0.0 { 0.0 } else { diff.signum() };
                if sign != 0.0 {
                    let inner = (&xu + &mu) * sp_chol.inverse()
                        - &xu * xp_chol.inverse()
                        - &mu * mp_inv.as_ref().expect("mean inverse prepared");
                    *grad -= inner * sign;
                }
            }
        }
        Ok((objective, gradient))
    }
}

fn chol_logdet(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}
