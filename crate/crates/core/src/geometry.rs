//! Riemannian metrics, divergences and the Karcher (geometric) mean on the
//! SPD manifold.
//!
//! Two notions of distance coexist here. The affine-invariant metric (AIRM)
//! is the true geodesic distance and defines the Karcher mean; the LogDet
//! divergence is a cheaper symmetric similarity whose square root is itself
//! a metric, and is the quantity the dimensionality-reduction objective
//! preserves.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdMatrix, SymMatrix};

/// Which distance a distance-taking operation should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Affine-invariant Riemannian metric.
    #[default]
    Airm,
    /// Square root of the LogDet (Jensen-Bregman) divergence.
    LogDet,
}

/// Controls the fixed-point iteration of [`karcher_mean`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KarcherConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the Frobenius norm of the mean tangent
    /// vector.
    pub tolerance: f64,
    /// Initial step length, halved on objective increase.
    pub step_size: f64,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-9,
            step_size: 1.0,
        }
    }
}

impl KarcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidConfig("step_size must be in (0, 1]".into()));
        }
        Ok(())
    }
}

fn check_same_dim(x: &SpdMatrix, y: &SpdMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    Ok(())
}

/// Squared affine-invariant distance, evaluated in the numerically symmetric
/// form `||log(Y^{-1/2} X Y^{-1/2})||_F^2`.
pub fn airm_sq(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_same_dim(x, y)?;
    if x.matrix() == y.matrix() {
        return Ok(0.0);
    }
    let w = linalg::spd_inv_sqrt(y);
    let whitened = SymMatrix::symmetrize(w.matrix() * x.matrix() * w.matrix());
    let eig = linalg::sym_eig(&whitened);
    Ok(eig.values.iter().map(|v| v.ln().powi(2)).sum())
}

/// Jensen-Bregman LogDet divergence
/// `J(X, Y) = ln det((X+Y)/2) - (ln det X + ln det Y)/2`.
pub fn jbld(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_same_dim(x, y)?;
    if x.matrix() == y.matrix() {
        return Ok(0.0);
    }
    jbld_raw(x.matrix(), y.matrix())
}

/// The divergence on raw symmetric matrices; shared by the cached and the
/// projected evaluations of the reduction objective so both sides see
/// bit-identical arithmetic.
pub(crate) fn jbld_raw(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let mid = (x + y) * 0.5;
    let j = linalg::logdet_raw(&mid)? - 0.5 * (linalg::logdet_raw(x)? + linalg::logdet_raw(y)?);
    // J is nonnegative by convexity of -ln det; rounding can leave a tiny
    // negative residue near X == Y.
    Ok(j.max(0.0))
}

/// LogDet metric `sqrt(J(X, Y))`.
pub fn logdet_metric(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    Ok(jbld(x, y)?.sqrt())
}

/// Squared distance under the chosen metric; AIRM uses the geodesic distance
/// squared, LogDet uses the divergence `J` itself.
pub fn distance_sq(metric: MetricKind, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    match metric {
        MetricKind::Airm => airm_sq(x, y),
        MetricKind::LogDet => jbld(x, y),
    }
}

/// Riemannian logarithmic map at `base`:
/// `B^{1/2} log(B^{-1/2} X B^{-1/2}) B^{1/2}`.
pub fn tangent_log(base: &SpdMatrix, x: &SpdMatrix) -> Result<SymMatrix> {
    check_same_dim(base, x)?;
    let s = linalg::spd_sqrt(base);
    let w = linalg::spd_inv_sqrt(base);
    let whitened = SpdMatrix::from_symmetric_unchecked(w.matrix() * x.matrix() * w.matrix());
    let l = linalg::spd_log(&whitened);
    Ok(SymMatrix::symmetrize(s.matrix() * l.matrix() * s.matrix()))
}

/// Riemannian exponential map at `base`, the inverse of [`tangent_log`].
pub fn tangent_exp(base: &SpdMatrix, tangent: &SymMatrix) -> Result<SpdMatrix> {
    if base.dim() != tangent.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            actual: tangent.dim(),
        });
    }
    let s = linalg::spd_sqrt(base);
    let w = linalg::spd_inv_sqrt(base);
    let whitened = SymMatrix::symmetrize(w.matrix() * tangent.matrix() * w.matrix());
    let e = linalg::spd_exp(&whitened);
    Ok(SpdMatrix::from_symmetric_unchecked(
        s.matrix() * e.matrix() * s.matrix(),
    ))
}

/// FNV-1a over the entry bit patterns; gives the mean iteration an input
/// ordering that does not depend on the caller's list order.
fn content_hash(m: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in m.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn entrywise_cmp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.total_cmp(y);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Karcher mean of a nonempty set of SPD matrices: the minimizer of the sum
/// of squared AIRM distances to the inputs.
///
/// Fixed-point iteration
/// `P <- P^{1/2} exp(step * mean_i log(P^{-1/2} P_i P^{-1/2})) P^{1/2}`,
/// initialized at the arithmetic mean and stopped when the tangent mean drops
/// below `cfg.tolerance` in Frobenius norm. Inputs are summed in a
/// content-ordered sequence, so the result is bit-identical under input
/// permutation.
pub fn karcher_mean(points: &[SpdMatrix], cfg: &KarcherConfig) -> Result<SpdMatrix> {
    cfg.validate()?;
    let first = points
        .first()
        .ok_or(Error::EmptyInput("karcher_mean needs points"))?;
    let dim = first.dim();
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.dim(),
            });
        }
    }

    let mut ordered: Vec<&SpdMatrix> = points.iter().collect();
    ordered.sort_by(|a, b| {
        content_hash(a.matrix())
            .cmp(&content_hash(b.matrix()))
            .then_with(|| entrywise_cmp(a.matrix(), b.matrix()))
    });

    let mut sum = DMatrix::<f64>::zeros(dim, dim);
    for p in &ordered {
        sum += p.matrix();
    }
    let mut current = SpdMatrix::from_symmetric_unchecked(sum / points.len() as f64);

    // Whitened logs at `p`, their mean, and the AIRM objective (which the
    // logs give for free as the sum of squared norms).
    let evaluate = |p: &SpdMatrix| -> (Vec<SymMatrix>, f64) {
        let w = linalg::spd_inv_sqrt(p);
        let logs: Vec<SymMatrix> = ordered
            .iter()
            .map(|q| {
                let whitened =
                    SpdMatrix::from_symmetric_unchecked(w.matrix() * q.matrix() * w.matrix());
                linalg::spd_log(&whitened)
            })
            .collect();
        let objective = logs.iter().map(|l| l.frobenius_norm().powi(2)).sum();
        (logs, objective)
    };

    let (mut logs, mut objective) = evaluate(&current);
    let mut residual = f64::INFINITY;

    for _ in 0..cfg.max_iterations {
        let mut tangent_sum = DMatrix::<f64>::zeros(dim, dim);
        for l in &logs {
            tangent_sum += l.matrix();
        }
        let tangent_mean = SymMatrix::symmetrize(tangent_sum / points.len() as f64);
        residual = tangent_mean.frobenius_norm();
        if residual < cfg.tolerance {
            return Ok(current);
        }

        let sqrt = linalg::spd_sqrt(&current);
        let mut step = cfg.step_size;
        let mut candidate = None;
        for _ in 0..=10 {
            let scaled = SymMatrix::symmetrize(tangent_mean.matrix() * step);
            let stepped = linalg::spd_exp(&scaled);
            let next = SpdMatrix::from_symmetric_unchecked(
                sqrt.matrix() * stepped.matrix() * sqrt.matrix(),
            );
            let (next_logs, next_obj) = evaluate(&next);
            // Rounding noise near the fixed point must not count as an
            // objective increase, or the step collapses and convergence stalls.
            if next_obj <= objective + 1e-12 * (1.0 + objective.abs()) {
                candidate = Some((next, next_logs, next_obj));
                break;
            }
            step *= 0.5;
            candidate = Some((next, next_logs, next_obj));
        }
        let (next, next_logs, next_obj) = candidate.expect("at least one step candidate");
        current = next;
        logs = next_logs;
        objective = next_obj;
    }

    // One final residual check so a last successful step still counts.
    let mut tangent_sum = DMatrix::<f64>::zeros(dim, dim);
    for l in &logs {
        tangent_sum += l.matrix();
    }
    let final_residual = (tangent_sum / points.len() as f64).norm();
    if final_residual < cfg.tolerance {
        return Ok(current);
    }

    Err(Error::MeanDidNotConverge {
        iterations: cfg.max_iterations,
        residual: residual.min(final_residual),
        last_iterate: Box::new(current),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spd_inv_sqrt, spd_sqrt, StiefelPoint};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(dim: usize, log_cond: f64, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let q = StiefelPoint::random_orthonormal(dim, dim, rng).unwrap();
        let eigs = nalgebra::DVector::from_fn(dim, |i, _| {
            let t = if dim == 1 {
                0.5
            } else {
                i as f64 / (dim - 1) as f64
            };
            (log_cond * (t - 0.5)).exp() * (1.0 + 0.2 * rand::Rng::random::<f64>(rng))
        });
        SpdMatrix::new(q.matrix() * DMatrix::from_diagonal(&eigs) * q.matrix().transpose()).unwrap()
    }

    fn scaled_identity(dim: usize, s: f64) -> SpdMatrix {
        SpdMatrix::new(DMatrix::identity(dim, dim) * s).unwrap()
    }

    /// Cluster of points around `center`, drawn through the exponential map;
    /// mirrors how same-class covariance descriptors spread in practice.
    fn random_spd_cluster(
        center: &SpdMatrix,
        count: usize,
        sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<SpdMatrix> {
        let dim = center.dim();
        let s = spd_sqrt(center);
        (0..count)
            .map(|_| {
                let mut g = DMatrix::<f64>::from_fn(dim, dim, |_, _| {
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
                });
                g = (&g + g.transpose()) * (0.5 * sigma);
                let e = crate::linalg::spd_exp(&SymMatrix::new(g).unwrap());
                SpdMatrix::from_symmetric_unchecked(s.matrix() * e.matrix() * s.matrix())
            })
            .collect()
    }

    /// Closed-form geometric mean of two SPD matrices:
    /// `X^{1/2} (X^{-1/2} Y X^{-1/2})^{1/2} X^{1/2}`.
    fn two_point_geometric_mean(x: &SpdMatrix, y: &SpdMatrix) -> SpdMatrix {
        let s = spd_sqrt(x);
        let w = spd_inv_sqrt(x);
        let inner = SpdMatrix::from_symmetric_unchecked(w.matrix() * y.matrix() * w.matrix());
        let r = spd_sqrt(&inner);
        SpdMatrix::from_symmetric_unchecked(s.matrix() * r.matrix() * s.matrix())
    }

    #[test]
    fn airm_identical_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_spd(4, 5.0, &mut rng);
        assert_eq!(airm_sq(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn airm_scaled_identity() {
        // d^2(2I, I) = sum of ln(2)^2 over two eigenvalues.
        let got = airm_sq(&scaled_identity(2, 2.0), &scaled_identity(2, 1.0)).unwrap();
        assert_relative_eq!(got, 2.0 * 2.0f64.ln().powi(2), max_relative = 1e-12);
        assert_relative_eq!(got, 0.960906, max_relative = 1e-5);
    }

    #[test]
    fn airm_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_spd(5, 6.0, &mut rng);
            let y = random_spd(5, 6.0, &mut rng);
            let a = airm_sq(&x, &y).unwrap();
            let b = airm_sq(&y, &x).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn airm_congruence_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_spd(4, 4.0, &mut rng);
            let y = random_spd(4, 4.0, &mut rng);
            // Random invertible M: Gaussian with a nudge away from singularity.
            let m = DMatrix::<f64>::from_fn(4, 4, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            }) + DMatrix::<f64>::identity(4, 4) * 0.5;
            let xt = SpdMatrix::new(
                SymMatrix::symmetrize(m.transpose() * x.matrix() * &m).into_matrix(),
            )
            .unwrap();
            let yt = SpdMatrix::new(
                SymMatrix::symmetrize(m.transpose() * y.matrix() * &m).into_matrix(),
            )
            .unwrap();
            let before = airm_sq(&x, &y).unwrap();
            let after = airm_sq(&xt, &yt).unwrap();
            assert_relative_eq!(before, after, max_relative = 1e-7);
        }
    }

    #[test]
    fn jbld_examples() {
        let i2 = scaled_identity(2, 1.0);
        assert_eq!(jbld(&i2, &i2).unwrap(), 0.0);
        // J(2I, I) = ln det(1.5 I) - (ln det 2I)/2 = ln 2.25 - 0.5 ln 4.
        let got = jbld(&scaled_identity(2, 2.0), &i2).unwrap();
        let want = 2.25f64.ln() - 0.5 * 4.0f64.ln();
        assert_relative_eq!(got, want, max_relative = 1e-12);
        assert_relative_eq!(got, 0.117783, max_relative = 1e-4);
    }

    #[test]
    fn jbld_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let x = random_spd(6, 6.0, &mut rng);
            let y = random_spd(6, 6.0, &mut rng);
            let a = jbld(&x, &y).unwrap();
            let b = jbld(&y, &x).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
            assert!(a >= 0.0);
            // Well-separated random draws must have strictly positive divergence.
            if (x.matrix() - y.matrix()).norm() >= 1e-9 {
                assert!(a > 0.0);
            }
        }
    }

    #[test]
    fn logdet_metric_examples() {
        let i2 = scaled_identity(2, 1.0);
        assert_eq!(logdet_metric(&i2, &i2).unwrap(), 0.0);
        let got = logdet_metric(&scaled_identity(2, 2.0), &i2).unwrap();
        assert_relative_eq!(got, 0.343195, max_relative = 1e-4);
    }

    #[test]
    fn logdet_metric_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2usize, 6] {
            for _ in 0..200 {
                let x = random_spd(dim, 5.0, &mut rng);
                let y = random_spd(dim, 5.0, &mut rng);
                let z = random_spd(dim, 5.0, &mut rng);
                let xz = logdet_metric(&x, &z).unwrap();
                let xy = logdet_metric(&x, &y).unwrap();
                let yz = logdet_metric(&y, &z).unwrap();
                assert!(
                    xz <= xy + yz + 1e-10,
                    "triangle violated: {xz} > {xy} + {yz}"
                );
            }
        }
    }

    #[test]
    fn tangent_log_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_spd(4, 4.0, &mut rng);
        assert!(tangent_log(&b, &b).unwrap().frobenius_norm() < 1e-9);

        let x = random_spd(4, 4.0, &mut rng);
        let at_identity = tangent_log(&SpdMatrix::identity(4), &x).unwrap();
        let plain_log = crate::linalg::spd_log(&x);
        assert!((at_identity.matrix() - plain_log.matrix()).norm() < 1e-10);
    }

    #[test]
    fn tangent_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let b = random_spd(5, 5.0, &mut rng);
            let x = random_spd(5, 5.0, &mut rng);
            let v = tangent_log(&b, &x).unwrap();
            let back = tangent_exp(&b, &v).unwrap();
            let rel = (back.matrix() - x.matrix()).norm() / x.matrix().norm();
            assert!(rel < 1e-8, "round trip error {rel}");
        }
    }

    #[test]
    fn karcher_of_identical_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_spd(4, 5.0, &mut rng);
        let mean = karcher_mean(
            &[a.clone(), a.clone(), a.clone()],
            &KarcherConfig::default(),
        )
        .unwrap();
        let rel = (mean.matrix() - a.matrix()).norm() / a.matrix().norm();
        assert!(rel < 1e-14, "mean of copies drifted by {rel}");
    }

    #[test]
    fn karcher_two_commuting_matrices() {
        let mean = karcher_mean(
            &[scaled_identity(2, 1.0), scaled_identity(2, 4.0)],
            &KarcherConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(mean.matrix()[(0, 0)], 2.0, max_relative = 1e-9);
        assert_relative_eq!(mean.matrix()[(1, 1)], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn karcher_matches_two_point_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Widely spread pairs converge slowly (the fixed point contracts
        // linearly with a data-dependent rate), so give the iteration room.
        let cfg = KarcherConfig {
            max_iterations: 400,
            ..KarcherConfig::default()
        };
        for dim in [2usize, 5, 11, 22] {
            for _ in 0..8 {
                let x = random_spd(dim, 5.0, &mut rng);
                let y = random_spd(dim, 5.0, &mut rng);
                let mean = karcher_mean(&[x.clone(), y.clone()], &cfg).unwrap();
                let closed = two_point_geometric_mean(&x, &y);
                let rel = (mean.matrix() - closed.matrix()).norm() / closed.matrix().norm();
                assert!(rel < 1e-7, "dim {dim}: closed-form deviation {rel}");
            }
        }
    }

    #[test]
    fn karcher_permutation_invariant_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let center = random_spd(4, 3.0, &mut rng);
        let pts = random_spd_cluster(&center, 6, 0.4, &mut rng);
        let forward = karcher_mean(&pts, &KarcherConfig::default()).unwrap();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let permuted = karcher_mean(&shuffled, &KarcherConfig::default()).unwrap();
        assert_eq!(forward.matrix(), permuted.matrix());
    }

    #[test]
    fn karcher_first_order_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let center = random_spd(5, 3.0, &mut rng);
        let pts = random_spd_cluster(&center, 7, 0.4, &mut rng);
        let cfg = KarcherConfig::default();
        let mean = karcher_mean(&pts, &cfg).unwrap();
        let w = spd_inv_sqrt(&mean);
        let mut tangent_sum = DMatrix::<f64>::zeros(5, 5);
        for p in &pts {
            let whitened =
                SpdMatrix::from_symmetric_unchecked(w.matrix() * p.matrix() * w.matrix());
            tangent_sum += crate::linalg::spd_log(&whitened).matrix();
        }
        let residual = tangent_sum.norm() / pts.len() as f64;
        assert!(residual < 10.0 * cfg.tolerance);
    }

    #[test]
    fn karcher_is_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let center = random_spd(3, 3.0, &mut rng);
        let pts = random_spd_cluster(&center, 5, 0.5, &mut rng);
        let mean = karcher_mean(&pts, &KarcherConfig::default()).unwrap();
        let objective = |p: &SpdMatrix| -> f64 { pts.iter().map(|q| airm_sq(p, q).unwrap()).sum() };
        let at_mean = objective(&mean);
        for _ in 0..100 {
            let mut delta = DMatrix::<f64>::from_fn(3, 3, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            delta = (&delta + delta.transpose()) * 0.05;
            let perturbed = tangent_exp(&mean, &SymMatrix::new(delta).unwrap()).unwrap();
            assert!(objective(&perturbed) >= at_mean - 1e-10);
        }
    }

    #[test]
    fn karcher_rejects_empty_and_mismatched() {
        assert!(matches!(
            karcher_mean(&[], &KarcherConfig::default()),
            Err(Error::EmptyInput(_))
        ));
        let a = scaled_identity(2, 1.0);
        let b = scaled_identity(3, 1.0);
        assert!(matches!(
            karcher_mean(&[a, b], &KarcherConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn karcher_nonconvergence_carries_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<SpdMatrix> = (0..6).map(|_| random_spd(4, 6.0, &mut rng)).collect();
        let cfg = KarcherConfig {
            max_iterations: 1,
            tolerance: 1e-15,
            step_size: 0.001953125,
        };
        match karcher_mean(&pts, &cfg) {
            Err(Error::MeanDidNotConverge {
                iterations,
                residual,
                last_iterate,
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
                assert_eq!(last_iterate.dim(), 4);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
