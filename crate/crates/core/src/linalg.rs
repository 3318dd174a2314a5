//! Dense symmetric linear-algebra primitives: validated symmetric, SPD and
//! orthonormal matrix types plus the eigendecomposition-backed matrix
//! functions (log, exp, square root) every other module builds on.
//!
//! All matrices are dense `f64`; the target problem sizes (dimensions in the
//! low tens) make anything fancier pointless.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on `|a_ij - a_ji|` accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// An SPD matrix must satisfy `lambda_min > SPD_RELATIVE_TOL * lambda_max`.
pub const SPD_RELATIVE_TOL: f64 = 1e-12;
/// Frobenius-norm tolerance on `U'U - I` accepted by [`StiefelPoint::new`].
pub const STIEFEL_TOL: f64 = 1e-8;

/// A validated real symmetric matrix.
///
/// Construction symmetrizes the input as `(M + M')/2` once the asymmetry is
/// confirmed to be below [`SYMMETRY_TOL`], which absorbs floating-point drift
/// from repeated congruences.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.is_empty() {
            return Err(Error::EmptyInput("matrix must have dimension >= 1"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        let mut asymmetry = 0.0f64;
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                asymmetry = asymmetry.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance: SYMMETRY_TOL,
            });
        }
        Ok(Self::symmetrize(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput("matrix must have dimension >= 1"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rows.iter().map(|r| r.len()).find(|&l| l != n).unwrap_or(n),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    /// Unconditional `(M + M')/2`, for products that are symmetric by
    /// construction up to rounding.
    pub(crate) fn symmetrize(matrix: DMatrix<f64>) -> Self {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Self { inner: sym }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }
}

/// A validated symmetric positive definite matrix, the manifold point type.
///
/// Positive definiteness is checked at construction with a scale-invariant
/// threshold: the smallest eigenvalue must exceed
/// [`SPD_RELATIVE_TOL`] times the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    base: SymMatrix,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::from_sym(SymMatrix::new(matrix)?)
    }

    pub fn from_sym(base: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&base);
        let min = eig.values[0];
        let max = eig.values[eig.values.len() - 1];
        if !(min > SPD_RELATIVE_TOL * max && min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        Ok(Self { base })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_sym(SymMatrix::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            base: SymMatrix {
                inner: DMatrix::identity(dim, dim),
            },
        }
    }

    /// Wraps a matrix that is SPD by construction (e.g. `V e^D V'` from an
    /// eigendecomposition, or a congruence of an SPD matrix), skipping the
    /// eigenvalue check. Symmetry drift is still absorbed.
    pub(crate) fn from_symmetric_unchecked(matrix: DMatrix<f64>) -> Self {
        Self {
            base: SymMatrix::symmetrize(matrix),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.base.inner
    }
}

/// An `n x m` matrix with orthonormal columns (a point on the Stiefel
/// manifold); the learned projection of the dimensionality reduction lives
/// here.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    inner: DMatrix<f64>,
}

impl StiefelPoint {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (matrix.nrows(), matrix.ncols());
        if m == 0 || n == 0 || m > n {
            return Err(Error::InvalidConfig(format!(
                "Stiefel point needs 1 <= cols <= rows, got {n} x {m}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        let defect = orthonormality_defect(&matrix);
        if defect > STIEFEL_TOL {
            return Err(Error::NotOrthonormal {
                defect,
                tolerance: STIEFEL_TOL,
            });
        }
        Ok(Self { inner: matrix })
    }

    /// The `n x m` matrix with ones on the principal diagonal: plain
    /// coordinate selection of the first `m` axes.
    pub fn coordinate_selection(rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 || cols > rows {
            return Err(Error::InvalidConfig(format!(
                "Stiefel point needs 1 <= cols <= rows, got {rows} x {cols}"
            )));
        }
        Ok(Self {
            inner: DMatrix::identity(rows, cols),
        })
    }

    /// Orthonormal basis from the QR factorization of a Gaussian draw.
    pub fn random_orthonormal<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        if cols == 0 || cols > rows {
            return Err(Error::InvalidConfig(format!(
                "Stiefel point needs 1 <= cols <= rows, got {rows} x {cols}"
            )));
        }
        let gauss = DMatrix::from_fn(rows, cols, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
        });
        let q = gauss.qr().q();
        Self::new(q.columns(0, cols).into_owned())
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }
}

/// `||U'U - I||_F`.
pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let m = u.ncols();
    (u.transpose() * u - DMatrix::<f64>::identity(m, m)).norm()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, column `j` paired with `values[j]`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with ascending eigenvalues, so that
/// `M = V diag(values) V'`.
pub fn sym_eig(m: &SymMatrix) -> SymEigen {
    let eig = m.matrix().clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

fn map_eigenvalues(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mapped = DVector::from_fn(eig.values.len(), |i, _| f(eig.values[i]));
    &eig.vectors * DMatrix::from_diagonal(&mapped) * eig.vectors.transpose()
}

/// Matrix logarithm `V diag(ln lambda) V'` of an SPD matrix.
pub fn spd_log(x: &SpdMatrix) -> SymMatrix {
    let eig = sym_eig(x.sym());
    SymMatrix::symmetrize(map_eigenvalues(&eig, f64::ln))
}

/// Matrix exponential of a symmetric matrix; the result is SPD since every
/// eigenvalue maps to `e^lambda > 0`.
pub fn spd_exp(s: &SymMatrix) -> SpdMatrix {
    let eig = sym_eig(s);
    SpdMatrix::from_symmetric_unchecked(map_eigenvalues(&eig, f64::exp))
}

/// Principal square root of an SPD matrix.
pub fn spd_sqrt(x: &SpdMatrix) -> SpdMatrix {
    let eig = sym_eig(x.sym());
    SpdMatrix::from_symmetric_unchecked(map_eigenvalues(&eig, f64::sqrt))
}

/// Inverse of the principal square root.
pub fn spd_inv_sqrt(x: &SpdMatrix) -> SpdMatrix {
    let eig = sym_eig(x.sym());
    SpdMatrix::from_symmetric_unchecked(map_eigenvalues(&eig, |v| 1.0 / v.sqrt()))
}

/// `ln det X` via Cholesky factorization. This sits on the hot path of the
/// LogDet divergence, where the triangular factorization is markedly cheaper
/// than an eigendecomposition.
pub fn logdet(x: &SpdMatrix) -> Result<f64> {
    logdet_raw(x.matrix())
}

/// Cholesky-based `ln det` of a raw symmetric matrix. Fails with
/// [`Error::NotPositiveDefinite`] when the factorization breaks down.
pub(crate) fn logdet_raw(m: &DMatrix<f64>) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
        max_eigenvalue: f64::NAN,
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Congruence projection `U' X U`, an `m x m` SPD matrix whenever `U` has
/// orthonormal (or merely full-rank) columns.
pub fn congruence(x: &SpdMatrix, u: &StiefelPoint) -> Result<SpdMatrix> {
    if u.rows() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: u.rows(),
        });
    }
    let projected = u.matrix().transpose() * x.matrix() * u.matrix();
    SpdMatrix::from_sym(SymMatrix::symmetrize(projected))
}
