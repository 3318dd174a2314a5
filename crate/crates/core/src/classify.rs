//! Riemannian classifiers over SPD features.
//!
//! MDM assigns a sample to the class whose Karcher mean is nearest. FGMDM
//! first learns Fisher discriminant directions in the tangent space at the
//! global mean (FGDA), projects every sample onto them ("geodesic
//! filtering", which keeps the original matrix dimension), and runs MDM on
//! the filtered matrices.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dplm::LabeledSample;
use crate::error::{Error, Result};
use crate::geometry::{self, KarcherConfig, MetricKind};
use crate::linalg::{self, SpdMatrix, SymMatrix};

/// Minimum-distance-to-mean classifier.
#[derive(Debug, Clone)]
pub struct MdmModel {
    class_means: BTreeMap<u32, SpdMatrix>,
    metric: MetricKind,
}

impl MdmModel {
    pub fn from_parts(class_means: BTreeMap<u32, SpdMatrix>, metric: MetricKind) -> Result<Self> {
        let mut dims = class_means.values().map(SpdMatrix::dim);
        let first = dims
            .next()
            .ok_or(Error::EmptyInput("model needs classes"))?;
        if dims.any(|d| d != first) {
            return Err(Error::DimensionMismatch {
                expected: first,
                actual: 0,
            });
        }
        Ok(Self {
            class_means,
            metric,
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.class_means.keys().copied()
    }

    pub fn class_mean(&self, label: u32) -> Option<&SpdMatrix> {
        self.class_means.get(&label)
    }

    pub fn class_means(&self) -> &BTreeMap<u32, SpdMatrix> {
        &self.class_means
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.class_means.values().next().map_or(0, SpdMatrix::dim)
    }
}

/// Trains MDM: one Karcher mean per class.
pub fn mdm_train(samples: &[LabeledSample], metric: MetricKind) -> Result<MdmModel> {
    mdm_train_with(samples, metric, &KarcherConfig::default())
}

pub fn mdm_train_with(
    samples: &[LabeledSample],
    metric: MetricKind,
    karcher: &KarcherConfig,
) -> Result<MdmModel> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("mdm_train needs samples"));
    }
    let mut by_class: BTreeMap<u32, Vec<SpdMatrix>> = BTreeMap::new();
    for s in samples {
        by_class.entry(s.label).or_default().push(s.matrix.clone());
    }
    let mut class_means = BTreeMap::new();
    for (label, mats) in by_class {
        class_means.insert(label, geometry::karcher_mean(&mats, karcher)?);
    }
    MdmModel::from_parts(class_means, metric)
}

/// Distances from `x` to every class mean, in ascending label order.
pub fn mdm_distances(model: &MdmModel, x: &SpdMatrix) -> Result<Vec<(u32, f64)>> {
    model
        .class_means
        .iter()
        .map(|(&label, mean)| Ok((label, geometry::distance_sq(model.metric, x, mean)?)))
        .collect()
}

/// Label of the nearest class mean; ties break toward the lower label.
pub fn mdm_predict(model: &MdmModel, x: &SpdMatrix) -> Result<u32> {
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.dim(),
        });
    }
    let mut best: Option<(u32, f64)> = None;
    for (label, d) in mdm_distances(model, x)? {
        if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((label, d));
        }
    }
    Ok(best.expect("nonempty model").0)
}

/// Requested number of discriminant filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterCount {
    /// One fewer than the number of classes (the Fisher rank bound).
    #[default]
    Auto,
    Fixed(usize),
}

/// Record of the concrete FGDA construction, kept with the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FgdaMetadata {
    pub requested: FilterCount,
    pub effective_filters: usize,
    pub n_classes: usize,
    pub ridge: f64,
    pub clamped: bool,
    pub warning: Option<String>,
}

/// Fisher-geodesic MDM: discriminant filtering in the tangent space followed
/// by MDM on the filtered matrices.
#[derive(Debug, Clone)]
pub struct FgmdmModel {
    /// Karcher mean of the training set, the tangent-space base point.
    pub reference: SpdMatrix,
    /// Orthonormal discriminant directions, one column per filter, in
    /// vectorized-tangent coordinates.
    pub filters: DMatrix<f64>,
    pub inner: MdmModel,
    pub metadata: FgdaMetadata,
}

/// Isometric vectorization of a symmetric matrix: upper triangle with
/// off-diagonal entries scaled by sqrt(2), so the Euclidean inner product of
/// vectors equals the Frobenius inner product of matrices.
pub fn sym_to_vector(s: &SymMatrix) -> DVector<f64> {
    let n = s.dim();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            v[idx] = if i == j {
                s.matrix()[(i, j)]
            } else {
                s.matrix()[(i, j)] * sqrt2
            };
            idx += 1;
        }
    }
    v
}

/// Inverse of [`sym_to_vector`].
pub fn vector_to_sym(v: &DVector<f64>, dim: usize) -> Result<SymMatrix> {
    if v.len() != dim * (dim + 1) / 2 {
        return Err(Error::DimensionMismatch {
            expected: dim * (dim + 1) / 2,
            actual: v.len(),
        });
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in i..dim {
            let val = if i == j { v[idx] } else { v[idx] / sqrt2 };
            m[(i, j)] = val;
            m[(j, i)] = val;
            idx += 1;
        }
    }
    Ok(SymMatrix::symmetrize(m))
}

/// Trains FGMDM.
///
/// The FGDA construction: tangent vectors at the global Karcher mean are
/// vectorized isometrically; multi-class Fisher LDA with ridge-regularized
/// within-class scatter yields discriminant directions, which are
/// orthonormalized; every sample is orthogonally projected onto their span
/// and mapped back through the exponential map, keeping the original matrix
/// dimension. MDM is then trained on the filtered matrices.
pub fn fgmdm_train(
    samples: &[LabeledSample],
    n_filters: FilterCount,
    metric: MetricKind,
) -> Result<FgmdmModel> {
    fgmdm_train_with(samples, n_filters, metric, &KarcherConfig::default())
}

pub fn fgmdm_train_with(
    samples: &[LabeledSample],
    n_filters: FilterCount,
    metric: MetricKind,
    karcher: &KarcherConfig,
) -> Result<FgmdmModel> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let n_classes = by_class.len();
    if n_classes < 2 {
        return Err(Error::InvalidConfig(
            "fgmdm_train needs at least 2 classes".into(),
        ));
    }
    for (&label, members) in &by_class {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                size: members.len(),
                required: 2,
            });
        }
    }

    let all: Vec<SpdMatrix> = samples.iter().map(|s| s.matrix.clone()).collect();
    let reference = geometry::karcher_mean(&all, karcher)?;
    let n = reference.dim();
    let d = n * (n + 1) / 2;

    let vectors: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| {
            Ok(sym_to_vector(&geometry::tangent_log(
                &reference, &s.matrix,
            )?))
        })
        .collect::<Result<_>>()?;

    // Fisher scatter matrices.
    let global_mean = vectors.iter().sum::<DVector<f64>>() / vectors.len() as f64;
    let mut s_w = DMatrix::<f64>::zeros(d, d);
    let mut s_b = DMatrix::<f64>::zeros(d, d);
    for members in by_class.values() {
        let class_mean =
            members.iter().map(|&i| &vectors[i]).sum::<DVector<f64>>() / members.len() as f64;
        for &i in members {
            let delta = &vectors[i] - &class_mean;
            s_w += &delta * delta.transpose();
        }
        let offset = &class_mean - &global_mean;
        s_b += (&offset * offset.transpose()) * members.len() as f64;
    }

    let ridge = 1e-3 * s_w.trace() / d as f64;
    // Whitener for the generalized eigenproblem; an all-zero within-class
    // scatter (identical samples per class) degrades to plain eigenvectors
    // of the between-class scatter.
    let whitener = if ridge > 0.0 {
        let regularized = SpdMatrix::new(&s_w + DMatrix::<f64>::identity(d, d) * ridge)?;
        linalg::spd_inv_sqrt(&regularized).into_matrix()
    } else {
        DMatrix::identity(d, d)
    };

    let m = SymMatrix::symmetrize(&whitener * &s_b * &whitener);
    let eig = linalg::sym_eig(&m);

    let requested = match n_filters {
        FilterCount::Auto => n_classes - 1,
        FilterCount::Fixed(r) => r,
    };
    if requested == 0 {
        return Err(Error::InvalidConfig("filter count must be >= 1".into()));
    }
    let clamped = requested > d;
    let effective = requested.min(d);
    let warning = clamped.then(|| {
        format!("requested {requested} filters but the tangent space has dimension {d}; clamped")
    });

    // Top discriminant directions (descending eigenvalue), pulled back
    // through the whitener, then orthonormalized.
    let mut directions = DMatrix::<f64>::zeros(d, effective);
    for j in 0..effective {
        let col = &whitener * eig.vectors.column(d - 1 - j);
        directions.set_column(j, &col);
    }
    let filters = directions.qr().q().columns(0, effective).into_owned();

    let filter_with =
        |x: &SpdMatrix| -> Result<SpdMatrix> { geodesic_filter(&reference, &filters, x) };
    let filtered: Vec<LabeledSample> = samples
        .iter()
        .map(|s| Ok(LabeledSample::new(filter_with(&s.matrix)?, s.label)))
        .collect::<Result<_>>()?;
    let inner = mdm_train_with(&filtered, metric, karcher)?;

    Ok(FgmdmModel {
        reference,
        filters,
        inner,
        metadata: FgdaMetadata {
            requested: n_filters,
            effective_filters: effective,
            n_classes,
            ridge,
            clamped,
            warning,
        },
    })
}

fn geodesic_filter(
    reference: &SpdMatrix,
    filters: &DMatrix<f64>,
    x: &SpdMatrix,
) -> Result<SpdMatrix> {
    let tangent = geometry::tangent_log(reference, x)?;
    let v = sym_to_vector(&tangent);
    let projected = filters * (filters.transpose() * v);
    let back = vector_to_sym(&projected, reference.dim())?;
    geometry::tangent_exp(reference, &back)
}

impl FgmdmModel {
    /// Applies the model's geodesic filtering to a matrix.
    pub fn filter(&self, x: &SpdMatrix) -> Result<SpdMatrix> {
        if x.dim() != self.reference.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.reference.dim(),
                actual: x.dim(),
            });
        }
        geodesic_filter(&self.reference, &self.filters, x)
    }
}

/// Filter, then classify with the inner MDM.
pub fn fgmdm_predict(model: &FgmdmModel, x: &SpdMatrix) -> Result<u32> {
    mdm_predict(&model.inner, &model.filter(x)?)
}

/// Either trained classifier, the unit of model files and evaluation.
#[derive(Debug, Clone)]
pub enum ClassifierModel {
    Mdm(MdmModel),
    Fgmdm(FgmdmModel),
}

impl ClassifierModel {
    pub fn predict(&self, x: &SpdMatrix) -> Result<u32> {
        match self {
            Self::Mdm(m) => mdm_predict(m, x),
            Self::Fgmdm(f) => fgmdm_predict(f, x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Mdm(m) => m.dim(),
            Self::Fgmdm(f) => f.reference.dim(),
        }
    }
}

/// Confusion counts with their label ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Sorted class labels indexing rows (truth) and columns (prediction).
    pub labels: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[u32], predicted: &[u32]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::EmptyInput("confusion matrix needs predictions"));
        }
        let mut labels: Vec<u32> = truth.iter().chain(predicted).copied().collect();
        labels.sort_unstable();
        labels.dedup();
        let index = |l: u32| labels.binary_search(&l).expect("label present");
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[index(t)][index(p)] += 1;
        }
        Ok(Self { labels, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total() as f64
    }
}

/// Cohen's kappa with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Set when chance agreement is 1 (all mass in a single row/column
    /// pairing), where kappa is defined as 0.
    pub degenerate: bool,
}

/// Chance-corrected agreement `(p_o - p_e) / (1 - p_e)` from a confusion
/// matrix.
pub fn kappa(confusion: &ConfusionMatrix) -> Result<Kappa> {
    let c = confusion.labels.len();
    if confusion.counts.len() != c || confusion.counts.iter().any(|r| r.len() != c) {
        return Err(Error::Format("confusion matrix must be square".into()));
    }
    let total = confusion.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix needs predictions"));
    }
    let total = total as f64;
    let observed = confusion.accuracy();
    let mut chance = 0.0;
    for i in 0..c {
        let row: u64 = confusion.counts[i].iter().sum();
        let col: u64 = confusion.counts.iter().map(|r| r[i]).sum();
        chance += (row as f64 / total) * (col as f64 / total);
    }
    if (1.0 - chance).abs() < 1e-12 {
        return Ok(Kappa {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Kappa {
        value: (observed - chance) / (1.0 - chance),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spd_exp, spd_sqrt, StiefelPoint};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_sym(dim: usize, sigma: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        SymMatrix::new((&g + g.transpose()) * (0.5 * sigma)).unwrap()
    }

    fn perturbed(center: &SpdMatrix, sigma: f64, rng: &mut ChaCha8Rng) -> SpdMatrix {
        let s = spd_sqrt(center);
        let e = spd_exp(&random_sym(center.dim(), sigma, rng));
        SpdMatrix::new(SymMatrix::symmetrize(s.matrix() * e.matrix() * s.matrix()).into_matrix())
            .unwrap()
    }

    fn scaled_identity(dim: usize, s: f64) -> SpdMatrix {
        SpdMatrix::new(DMatrix::identity(dim, dim) * s).unwrap()
    }

    /// Two separable classes around I and 4I.
    fn separable_fixture(
        dim: usize,
        per_class: usize,
        sigma: f64,
        seed: u64,
    ) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [scaled_identity(dim, 1.0), scaled_identity(dim, 4.0)];
        let mut out = Vec::new();
        for (label, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                out.push(LabeledSample::new(
                    perturbed(center, sigma, &mut rng),
                    label as u32,
                ));
            }
        }
        out
    }

    #[test]
    fn mdm_single_sample_per_class_means_are_the_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = perturbed(&scaled_identity(3, 1.0), 0.5, &mut rng);
        let b = perturbed(&scaled_identity(3, 2.0), 0.5, &mut rng);
        let samples = vec![
            LabeledSample::new(a.clone(), 0),
            LabeledSample::new(b.clone(), 1),
        ];
        let model = mdm_train(&samples, MetricKind::Airm).unwrap();
        assert!((model.class_mean(0).unwrap().matrix() - a.matrix()).norm() < 1e-12);
        assert!((model.class_mean(1).unwrap().matrix() - b.matrix()).norm() < 1e-12);
    }

    #[test]
    fn mdm_identical_class_mean_is_shared_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = perturbed(&scaled_identity(3, 1.0), 0.4, &mut rng);
        let samples: Vec<LabeledSample> =
            (0..4).map(|_| LabeledSample::new(a.clone(), 7)).collect();
        let model = mdm_train(&samples, MetricKind::Airm).unwrap();
        let rel = (model.class_mean(7).unwrap().matrix() - a.matrix()).norm() / a.matrix().norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn mdm_two_class_identity_instance() {
        let samples = vec![
            LabeledSample::new(scaled_identity(2, 1.0), 0),
            LabeledSample::new(scaled_identity(2, 4.0), 1),
        ];
        let model = mdm_train(&samples, MetricKind::Airm).unwrap();
        // Test point 1.5I: AIRM distance sqrt(2) ln 1.5 to I beats
        // sqrt(2) ln(8/3) to 4I.
        let x = scaled_identity(2, 1.5);
        assert_eq!(mdm_predict(&model, &x).unwrap(), 0);
        // A class mean classifies as its own class.
        assert_eq!(mdm_predict(&model, &scaled_identity(2, 4.0)).unwrap(), 1);
    }

    #[test]
    fn mdm_prediction_invariant_under_relabeling() {
        let samples = separable_fixture(3, 6, 0.2, 3);
        let model = mdm_train(&samples, MetricKind::Airm).unwrap();
        // Permute labels 0 <-> 1 and retrain.
        let relabeled: Vec<LabeledSample> = samples
            .iter()
            .map(|s| LabeledSample::new(s.matrix.clone(), 1 - s.label))
            .collect();
        let permuted = mdm_train(&relabeled, MetricKind::Airm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = perturbed(&scaled_identity(3, 2.0), 0.4, &mut rng);
            let direct = mdm_predict(&model, &x).unwrap();
            let via_permuted = 1 - mdm_predict(&permuted, &x).unwrap();
            assert_eq!(direct, via_permuted);
        }
    }

    #[test]
    fn mdm_argmin_affine_invariant_under_global_congruence() {
        let samples = separable_fixture(3, 5, 0.3, 5);
        let model = mdm_train(&samples, MetricKind::Airm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = DMatrix::<f64>::from_fn(3, 3, |_, _| StandardNormal.sample(&mut rng))
            + DMatrix::<f64>::identity(3, 3);
        let congruent = |x: &SpdMatrix| {
            SpdMatrix::new(SymMatrix::symmetrize(m.transpose() * x.matrix() * &m).into_matrix())
                .unwrap()
        };
        let mut transformed_means = BTreeMap::new();
        for label in model.labels() {
            transformed_means.insert(label, congruent(model.class_mean(label).unwrap()));
        }
        let transformed_model = MdmModel::from_parts(transformed_means, MetricKind::Airm).unwrap();
        for s in &samples {
            let before = mdm_predict(&model, &s.matrix).unwrap();
            let after = mdm_predict(&transformed_model, &congruent(&s.matrix)).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn mdm_separable_fixture_is_perfect() {
        let train = separable_fixture(2, 20, 0.2, 7);
        let test = separable_fixture(2, 20, 0.2, 8);
        let model = mdm_train(&train, MetricKind::Airm).unwrap();
        for s in &test {
            assert_eq!(mdm_predict(&model, &s.matrix).unwrap(), s.label);
        }
    }

    #[test]
    fn vectorization_is_isometric_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in [2usize, 4, 7] {
            let s = random_sym(dim, 1.0, &mut rng);
            let v = sym_to_vector(&s);
            assert_relative_eq!(v.norm(), s.frobenius_norm(), max_relative = 1e-12);
            let back = vector_to_sym(&v, dim).unwrap();
            assert!((back.matrix() - s.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn fgmdm_filtered_matrices_keep_dimension_and_auto_uses_fisher_rank() {
        let samples = separable_fixture(3, 6, 0.3, 10);
        let model = fgmdm_train(&samples, FilterCount::Auto, MetricKind::Airm).unwrap();
        assert_eq!(model.metadata.effective_filters, 1);
        assert_eq!(model.metadata.n_classes, 2);
        assert!(!model.metadata.clamped);
        let filtered = model.filter(&samples[0].matrix).unwrap();
        assert_eq!(filtered.dim(), 3);
    }

    #[test]
    fn fgmdm_filtering_is_idempotent() {
        let samples = separable_fixture(3, 6, 0.3, 11);
        let model = fgmdm_train(&samples, FilterCount::Auto, MetricKind::Airm).unwrap();
        for s in samples.iter().take(4) {
            let once = model.filter(&s.matrix).unwrap();
            let twice = model.filter(&once).unwrap();
            let rel = (twice.matrix() - once.matrix()).norm() / once.matrix().norm();
            assert!(rel < 1e-8, "filtering not idempotent: {rel}");
        }
    }

    #[test]
    fn fgmdm_with_full_filter_count_matches_mdm() {
        let samples = separable_fixture(3, 8, 0.3, 12);
        let d = 3 * 4 / 2;
        let full = fgmdm_train(&samples, FilterCount::Fixed(d), MetricKind::Airm).unwrap();
        let plain = mdm_train(&samples, MetricKind::Airm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let x = perturbed(&scaled_identity(3, 2.0), 0.5, &mut rng);
            assert_eq!(
                fgmdm_predict(&full, &x).unwrap(),
                mdm_predict(&plain, &x).unwrap()
            );
        }
    }

    #[test]
    fn fgmdm_clamps_excessive_filter_counts() {
        let samples = separable_fixture(2, 5, 0.3, 14);
        let model = fgmdm_train(&samples, FilterCount::Fixed(100), MetricKind::Airm).unwrap();
        assert!(model.metadata.clamped);
        assert_eq!(model.metadata.effective_filters, 3);
        assert!(model.metadata.warning.is_some());
    }

    #[test]
    fn fgmdm_classifies_training_samples_of_separable_fixture() {
        let samples = separable_fixture(2, 10, 0.2, 15);
        let model = fgmdm_train(&samples, FilterCount::Auto, MetricKind::Airm).unwrap();
        for s in &samples {
            assert_eq!(fgmdm_predict(&model, &s.matrix).unwrap(), s.label);
        }
    }

    #[test]
    fn fgmdm_prediction_on_class_means_matches_inner_mdm() {
        let samples = separable_fixture(3, 6, 0.3, 16);
        let model = fgmdm_train(&samples, FilterCount::Auto, MetricKind::Airm).unwrap();
        let plain = mdm_train(&samples, MetricKind::Airm).unwrap();
        for label in plain.labels() {
            let mean = plain.class_mean(label).unwrap();
            let via_fgmdm = fgmdm_predict(&model, mean).unwrap();
            let via_inner = mdm_predict(&model.inner, &model.filter(mean).unwrap()).unwrap();
            assert_eq!(via_fgmdm, via_inner);
        }
    }

    #[test]
    fn fgmdm_rejects_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let one_class: Vec<LabeledSample> = (0..4)
            .map(|_| LabeledSample::new(perturbed(&scaled_identity(2, 1.0), 0.3, &mut rng), 0))
            .collect();
        assert!(fgmdm_train(&one_class, FilterCount::Auto, MetricKind::Airm).is_err());

        let mut lopsided = separable_fixture(2, 3, 0.3, 18);
        lopsided.push(LabeledSample::new(scaled_identity(2, 9.0), 2));
        assert!(matches!(
            fgmdm_train(&lopsided, FilterCount::Auto, MetricKind::Airm),
            Err(Error::ClassTooSmall { label: 2, .. })
        ));
    }

    #[test]
    fn kappa_perfect_and_uniform() {
        let perfect = ConfusionMatrix {
            labels: vec![0, 1, 2],
            counts: vec![vec![10, 0, 0], vec![0, 7, 0], vec![0, 0, 13]],
        };
        assert_relative_eq!(kappa(&perfect).unwrap().value, 1.0, epsilon = 1e-12);

        let uniform = ConfusionMatrix {
            labels: vec![0, 1, 2, 3],
            counts: vec![vec![5; 4]; 4],
        };
        let k = kappa(&uniform).unwrap();
        assert!(k.value.abs() < 1e-12);
        assert!(!k.degenerate);
    }

    #[test]
    fn kappa_hand_computed_two_class() {
        let confusion = ConfusionMatrix {
            labels: vec![0, 1],
            counts: vec![vec![40, 10], vec![10, 40]],
        };
        // p_o = 0.8, p_e = 0.5 -> kappa = 0.6
        assert_relative_eq!(kappa(&confusion).unwrap().value, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn kappa_degenerate_single_cell() {
        let confusion = ConfusionMatrix {
            labels: vec![0, 1],
            counts: vec![vec![25, 0], vec![0, 0]],
        };
        let k = kappa(&confusion).unwrap();
        assert_eq!(k.value, 0.0);
        assert!(k.degenerate);
    }

    #[test]
    fn confusion_from_pairs() {
        let truth = vec![0, 0, 1, 1, 1];
        let pred = vec![0, 1, 1, 1, 0];
        let c = ConfusionMatrix::from_pairs(&truth, &pred).unwrap();
        assert_eq!(c.labels, vec![0, 1]);
        assert_eq!(c.counts, vec![vec![1, 1], vec![1, 2]]);
        assert_relative_eq!(c.accuracy(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn fgmdm_full_filter_identity_uses_random_projection_sanity() {
        // With every direction retained the tangent projection is the
        // identity, so filtering must return the input within tolerance.
        let samples = separable_fixture(3, 6, 0.3, 19);
        let d = 6;
        let model = fgmdm_train(&samples, FilterCount::Fixed(d), MetricKind::Airm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let q = StiefelPoint::random_orthonormal(3, 3, &mut rng).unwrap();
        let x = SpdMatrix::new(
            SymMatrix::symmetrize(
                q.matrix()
                    * DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.5, 0.7])
                    * q.matrix().transpose(),
            )
            .into_matrix(),
        )
        .unwrap();
        let filtered = model.filter(&x).unwrap();
        let rel = (filtered.matrix() - x.matrix()).norm() / x.matrix().norm();
        assert!(
            rel < 1e-8,
            "full-rank filtering altered the matrix by {rel}"
        );
    }
}
