//! Supervised dimensionality reduction for SPD matrices by distance
//! preservation to local means (DPLM).
//!
//! Each training sample gets a neighborhood of its `K` nearest same-class
//! samples and that neighborhood's Karcher mean. The algorithm then learns an
//! orthonormal `n x m` projection `U` minimizing the total change of the
//! LogDet divergence between neighbors and their local mean under `X -> U'XU`.
//! Feasibility (`U'U = I`) is maintained exactly by updating along a Cayley
//! curve with a nonmonotone curvilinear line search and Barzilai-Borwein step
//! seeding.

mod problem;

pub use problem::DplmProblem;

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, KarcherConfig, MetricKind};
use crate::linalg::{self, SpdMatrix, StiefelPoint};

/// One training or test unit: an SPD matrix with its class label.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub matrix: SpdMatrix,
    pub label: u32,
}

impl LabeledSample {
    pub fn new(matrix: SpdMatrix, label: u32) -> Self {
        Self { matrix, label }
    }
}

/// A sample's nearest neighbors and their Karcher mean.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub owner_index: usize,
    pub neighbor_indices: Vec<usize>,
    pub local_mean: SpdMatrix,
}

/// How the projection is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// `n x m` matrix with ones on the principal diagonal. Deterministic, and
    /// makes `m == n` an exact zero-objective fixed point.
    #[default]
    CoordinateSelection,
    /// QR of a seeded Gaussian draw.
    RandomOrthonormal { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DplmConfig {
    /// Projected dimension `m`, `1 <= m <= n`.
    pub target_dim: usize,
    /// Neighborhood size `K`.
    pub k_neighbors: usize,
    /// Restrict neighbor search to same-label samples.
    pub supervised: bool,
    /// Distance used for the nearest-neighbor search.
    pub neighbor_metric: MetricKind,
    pub max_outer_iterations: usize,
    /// Stop once the projected-gradient norm `||A U||_F` drops below this.
    pub grad_norm_tol: f64,
    /// Step length for the very first line search.
    pub initial_step: f64,
    /// Line-search backtracking factor, in (0, 1).
    pub contraction: f64,
    /// Sufficient-decrease constant `c`, in (0, 1).
    pub sufficient_decrease: f64,
    /// Nonmonotone window: a trial step must beat the maximum of this many
    /// previous objective values.
    pub window: usize,
    pub init: InitKind,
    /// Settings for the local Karcher means.
    pub karcher: KarcherConfig,
}

impl DplmConfig {
    pub fn new(target_dim: usize) -> Self {
        Self {
            target_dim,
            k_neighbors: 5,
            supervised: true,
            neighbor_metric: MetricKind::LogDet,
            max_outer_iterations: 200,
            grad_norm_tol: 1e-5,
            initial_step: 1e-3,
            contraction: 0.5,
            sufficient_decrease: 1e-4,
            window: 5,
            init: InitKind::CoordinateSelection,
            karcher: KarcherConfig::default(),
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.target_dim == 0 || self.target_dim > input_dim {
            return Err(Error::InvalidConfig(format!(
                "target_dim must be in [1, {input_dim}], got {}",
                self.target_dim
            )));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_outer_iterations must be >= 1".into(),
            ));
        }
        if !(self.grad_norm_tol > 0.0) {
            return Err(Error::InvalidConfig("grad_norm_tol must be > 0".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("initial_step must be > 0".into()));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::InvalidConfig("contraction must be in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::InvalidConfig(
                "sufficient_decrease must be in (0, 1)".into(),
            ));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        self.karcher.validate()
    }
}

/// How a fit run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    /// Projected-gradient norm dropped below tolerance.
    Converged,
    MaxIterations,
    /// Line search could not find an acceptable step; the best iterate so far
    /// was returned.
    Stalled,
}

/// Per-iterate entry of the training trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    /// `||A U||_F` at this iterate.
    pub grad_norm: f64,
    /// `||A||_F^2` at this iterate; the line-search bound for the next step.
    pub skew_norm_sq: f64,
    /// Step that produced this iterate (0 for the initial one).
    pub step_size: f64,
    /// `||U'U - I||_F` at this iterate.
    pub orthonormality_defect: f64,
    /// Wall-clock seconds spent producing this iterate. Excluded from
    /// serialized artifacts so model files stay byte-identical across reruns.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: Vec<IterationRecord>,
    pub status: FitStatus,
    /// Times the iterate drifted past the feasibility tolerance and was
    /// re-orthonormalized by QR. Zero in healthy runs.
    pub qr_rescues: usize,
}

impl TrainingReport {
    pub fn initial_objective(&self) -> f64 {
        self.iterations.first().map_or(0.0, |r| r.objective)
    }

    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map_or(0.0, |r| r.objective)
    }
}

/// A fitted projection together with its provenance.
#[derive(Debug, Clone)]
pub struct DplmModel {
    pub projection: StiefelPoint,
    pub config: DplmConfig,
    pub report: TrainingReport,
}

impl DplmModel {
    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn target_dim(&self) -> usize {
        self.projection.cols()
    }
}

/// Builds one neighborhood per sample: the `K` nearest neighbors under the
/// configured metric (restricted to same-label samples when supervised, owner
/// always excluded, distance ties broken by lower sample index) plus their
/// Karcher mean.
pub fn build_neighborhoods(
    samples: &[LabeledSample],
    cfg: &DplmConfig,
) -> Result<Vec<Neighborhood>> {
    let k = cfg.k_neighbors;
    if samples.len() < k + 1 {
        return Err(Error::InvalidConfig(format!(
            "need at least {} samples for K = {k}, got {}",
            k + 1,
            samples.len()
        )));
    }

    // Candidate pool per owner: same-label indices when supervised, everyone
    // otherwise.
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    if cfg.supervised {
        for (i, s) in samples.iter().enumerate() {
            groups.entry(s.label).or_default().push(i);
        }
        for (&label, members) in &groups {
            if members.len() <= k {
                return Err(Error::ClassTooSmall {
                    label,
                    size: members.len(),
                    required: k + 1,
                });
            }
        }
    } else {
        groups.insert(0, (0..samples.len()).collect());
    }

    // Pairwise distances within each group, computed once.
    let mut distance: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for members in groups.values() {
        let pairs: Vec<(usize, usize)> = members
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| members[a + 1..].iter().map(move |&j| (i, j)))
            .collect();
        let computed: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                geometry::distance_sq(cfg.neighbor_metric, &samples[i].matrix, &samples[j].matrix)
            })
            .collect();
        for (&(i, j), d) in pairs.iter().zip(computed) {
            distance.insert((i, j), d?);
        }
    }
    let dist = |i: usize, j: usize| -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        distance[&key]
    };

    let neighbor_lists: Vec<(usize, Vec<usize>)> = groups
        .values()
        .flat_map(|members| {
            members.iter().map(|&owner| {
                let mut candidates: Vec<usize> =
                    members.iter().copied().filter(|&j| j != owner).collect();
                candidates.sort_by(|&a, &b| {
                    dist(owner, a)
                        .total_cmp(&dist(owner, b))
                        .then_with(|| a.cmp(&b))
                });
                candidates.truncate(k);
                (owner, candidates)
            })
        })
        .collect();

    let mut neighborhoods: Vec<Option<Neighborhood>> = Vec::new();
    neighborhoods.resize_with(samples.len(), || None);
    let built: Vec<Result<Neighborhood>> = neighbor_lists
        .par_iter()
        .map(|(owner, indices)| {
            let mats: Vec<SpdMatrix> = indices.iter().map(|&j| samples[j].matrix.clone()).collect();
            let local_mean = geometry::karcher_mean(&mats, &cfg.karcher)?;
            Ok(Neighborhood {
                owner_index: *owner,
                neighbor_indices: indices.clone(),
                local_mean,
            })
        })
        .collect();
    for nb in built {
        let nb = nb?;
        let owner = nb.owner_index;
        neighborhoods[owner] = Some(nb);
    }
    Ok(neighborhoods
        .into_iter()
        .map(|n| n.expect("one per sample"))
        .collect())
}

/// Skew part `A = G U' - U G'` driving the feasible update curve.
fn skew_from_gradient(u: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g * u.transpose() - u * g.transpose()
}

/// Point on the Cayley curve:
/// `Y(tau) = (I + tau/2 A)^{-1} (I - tau/2 A) U`, so `Y(0) = U` and
/// `dY/dtau(0) = -A U`, a descent direction.
fn cayley_on_curve(u: &DMatrix<f64>, a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = u.nrows();
    let half = a * (tau / 2.0);
    let lhs = DMatrix::<f64>::identity(n, n) + &half;
    let rhs = (DMatrix::<f64>::identity(n, n) - &half) * u;
    // A skew system (I + tA) is nonsingular for every real tau.
    lhs.lu()
        .solve(&rhs)
        .expect("Cayley system is nonsingular for skew A")
}

/// One feasibility-preserving update step from `u` along the Cayley curve
/// generated by the Euclidean gradient `gradient`.
pub fn cayley_step(u: &StiefelPoint, gradient: &DMatrix<f64>, tau: f64) -> Result<StiefelPoint> {
    if gradient.nrows() != u.rows() || gradient.ncols() != u.cols() {
        return Err(Error::DimensionMismatch {
            expected: u.rows() * u.cols(),
            actual: gradient.nrows() * gradient.ncols(),
        });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "step must be finite and >= 0, got {tau}"
        )));
    }
    let a = skew_from_gradient(u.matrix(), gradient);
    StiefelPoint::new(cayley_on_curve(u.matrix(), &a, tau))
}

/// Fits the projection: builds neighborhoods once, then iterates gradient /
/// Cayley curve / nonmonotone backtracking with Barzilai-Borwein step seeding
/// until the projected-gradient norm falls below tolerance.
pub fn fit(samples: &[LabeledSample], cfg: &DplmConfig) -> Result<DplmModel> {
    let first = samples
        .first()
        .ok_or(Error::EmptyInput("fit needs samples"))?;
    let n = first.matrix.dim();
    cfg.validate(n)?;

    let neighborhoods = build_neighborhoods(samples, cfg)?;
    let problem = DplmProblem::new(samples, &neighborhoods)?;
    fit_problem(&problem, cfg)
}

/// The optimizer itself, reusable once neighborhoods are prepared.
pub fn fit_problem(problem: &DplmProblem, cfg: &DplmConfig) -> Result<DplmModel> {
    let n = problem.dim();
    let m = cfg.target_dim;
    cfg.validate(n)?;

    let mut u: DMatrix<f64> = match cfg.init {
        InitKind::CoordinateSelection => StiefelPoint::coordinate_selection(n, m)?.into_matrix(),
        InitKind::RandomOrthonormal { seed } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            StiefelPoint::random_orthonormal(n, m, &mut rng)?.into_matrix()
        }
    };

    let (mut h, g) = problem.evaluate(&u, true)?;
    let mut g = g.expect("gradient requested");

    let mut window: VecDeque<f64> = VecDeque::with_capacity(cfg.window);
    window.push_back(h);

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut qr_rescues = 0usize;
    let status;
    let mut best: (f64, DMatrix<f64>) = (h, u.clone());
    let mut previous: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut tau = cfg.initial_step;
    let mut last_step = 0.0f64;
    let mut last_seconds = 0.0f64;

    let mut t = 0usize;
    loop {
        let a = skew_from_gradient(&u, &g);
        let grad_norm = (&a * &u).norm();
        records.push(IterationRecord {
            iteration: t,
            objective: h,
            grad_norm,
            skew_norm_sq: a.norm_squared(),
            step_size: last_step,
            orthonormality_defect: linalg::orthonormality_defect(&u),
            seconds: last_seconds,
        });

        if grad_norm < cfg.grad_norm_tol {
            status = FitStatus::Converged;
            break;
        }
        if t >= cfg.max_outer_iterations {
            status = FitStatus::MaxIterations;
            break;
        }

        let started = Instant::now();

        // Barzilai-Borwein seed after the first accepted step, alternating
        // the two step formulas; clamped to keep the curve well scaled.
        if let Some((prev_u, prev_g)) = &previous {
            let s = &u - prev_u;
            let y = &g - prev_g;
            let sy = s.dot(&y).abs();
            let candidate = if t % 2 == 1 {
                s.dot(&s) / sy
            } else {
                sy / y.dot(&y)
            };
            tau = if candidate.is_finite() && candidate > 0.0 {
                candidate.clamp(1e-10, 1e4)
            } else {
                cfg.initial_step
            };
        }

        let reference = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a_norm_sq = a.norm_squared();
        let mut accepted: Option<(DMatrix<f64>, f64, f64)> = None;
        for _ in 0..30 {
            let y = cayley_on_curve(&u, &a, tau);
            let hy = problem.objective_raw(&y)?;
            if hy <= reference - cfg.sufficient_decrease * tau * a_norm_sq {
                accepted = Some((y, hy, tau));
                break;
            }
            tau *= cfg.contraction;
        }
        let Some((mut y, hy, step)) = accepted else {
            status = FitStatus::Stalled;
            break;
        };

        // The Cayley curve preserves feasibility to rounding; a QR rescue
        // only triggers if drift ever exceeds the feasibility tolerance.
        if linalg::orthonormality_defect(&y) > 1e-8 {
            y = y.qr().q().columns(0, m).into_owned();
            qr_rescues += 1;
        }

        let gy = problem.gradient_raw(&y)?;
        previous = Some((std::mem::replace(&mut u, y), std::mem::replace(&mut g, gy)));
        h = hy;
        if window.len() == cfg.window {
            window.pop_front();
        }
        window.push_back(h);
        if h < best.0 {
            best = (h, u.clone());
        }
        last_step = step;
        last_seconds = started.elapsed().as_secs_f64();
        t += 1;
    }

    let chosen = if status == FitStatus::Stalled {
        best.1
    } else {
        u
    };
    Ok(DplmModel {
        projection: StiefelPoint::new(chosen)?,
        config: cfg.clone(),
        report: TrainingReport {
            iterations: records,
            status,
            qr_rescues,
        },
    })
}

/// Projects a new sample into the learned space: `U' X U`.
pub fn transform(model: &DplmModel, x: &SpdMatrix) -> Result<SpdMatrix> {
    linalg::congruence(x, &model.projection)
}
