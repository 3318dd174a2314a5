//! Subcommand implementations. Each command resolves its configuration from
//! defaults, an optional `--config` JSON file, and flags (flags win), then
//! echoes the resolved configuration into whatever it writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use dplm::classify::{
    fgmdm_train_with, kappa, mdm_train_with, ClassifierModel, ConfusionMatrix, FilterCount,
};
use dplm::dplm::{
    build_neighborhoods, fit_problem, DplmConfig, DplmProblem, InitKind, LabeledSample,
};
use dplm::geometry::{KarcherConfig, MetricKind};
use dplm::io;
use dplm::pipeline::{select_preproc, GridSearchConfig};

use crate::synth::{self, Structure, SynthConfig};
use crate::CliFailure;

type CliResult<T = ()> = Result<T, CliFailure>;

// --- shared plumbing ---

fn load_config_file<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliFailure {
                exit_code: 3,
                kind: "data".into(),
                message: format!("{}: {e}", p.display()),
            })?;
            serde_json::from_str(&text).map_err(|e| CliFailure {
                exit_code: 2,
                kind: "config".into(),
                message: format!("{}: {e}", p.display()),
            })
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(dplm::Error::from)?;
        }
    }
    fs::write(path, io::to_json_pretty(value).map_err(CliFailure::from)?)
        .map_err(dplm::Error::from)?;
    Ok(())
}

fn parse_f64_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliFailure::usage(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliFailure::usage(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

/// Bands are written `low-high`, e.g. `8-30,5-35`.
fn parse_bands(text: &str) -> CliResult<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .trim()
                .split_once('-')
                .ok_or_else(|| CliFailure::usage(format!("bad band {pair:?}, want low-high")))?;
            Ok((
                lo.trim()
                    .parse::<f64>()
                    .map_err(|_| CliFailure::usage(format!("bad band edge {lo:?}")))?,
                hi.trim()
                    .parse::<f64>()
                    .map_err(|_| CliFailure::usage(format!("bad band edge {hi:?}")))?,
            ))
        })
        .collect()
}

macro_rules! override_with {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })+
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    #[default]
    Airm,
    LogDet,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Airm => MetricKind::Airm,
            MetricArg::LogDet => MetricKind::LogDet,
        }
    }
}

// --- synth ---

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory receiving the manifests and matrix CSVs.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<u32>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Held-out samples per class, written as a second dataset.
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub structure: Option<Structure>,
    #[arg(long)]
    pub block_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub background_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run_synth(args: SynthArgs) -> CliResult {
    let mut cfg: SynthConfig = load_config_file(args.config.as_ref())?;
    override_with!(
        cfg,
        args,
        classes,
        per_class,
        test_per_class,
        dim,
        structure,
        block_dim,
        separation,
        noise,
        background_noise,
        seed
    );
    let (train, test) = synth::generate(&cfg)?;
    let metadata = serde_json::json!({ "command": "synth", "config": cfg });
    let train_manifest = io::save_dataset(&args.out, "train", &train, metadata.clone())?;
    let mut summary = serde_json::json!({
        "command": "synth",
        "config": cfg,
        "train_manifest": train_manifest,
        "train_samples": train.len(),
    });
    if !test.is_empty() {
        let test_manifest = io::save_dataset(&args.out, "test", &test, metadata)?;
        summary["test_manifest"] = serde_json::json!(test_manifest);
        summary["test_samples"] = serde_json::json!(test.len());
    }
    println!("{summary}");
    Ok(())
}

// --- fit ---

/// Mirror of the library's fit configuration with kebab-case field names
/// matching the flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitConfig {
    /// 0 means "not set"; the flag or config file must provide it.
    pub target_dim: usize,
    pub k_neighbors: usize,
    pub supervised: bool,
    pub neighbor_metric: MetricArg,
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub contraction: f64,
    pub sufficient_decrease: f64,
    pub window: usize,
    pub random_init: bool,
    pub init_seed: u64,
    pub karcher_max_iterations: usize,
    pub karcher_tolerance: f64,
    pub karcher_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = DplmConfig::new(1);
        let k = KarcherConfig::default();
        Self {
            target_dim: 0,
            k_neighbors: d.k_neighbors,
            supervised: d.supervised,
            neighbor_metric: MetricArg::LogDet,
            max_iterations: d.max_outer_iterations,
            grad_tol: d.grad_norm_tol,
            initial_step: d.initial_step,
            contraction: d.contraction,
            sufficient_decrease: d.sufficient_decrease,
            window: d.window,
            random_init: false,
            init_seed: 0,
            karcher_max_iterations: k.max_iterations,
            karcher_tolerance: k.tolerance,
            karcher_step: k.step_size,
        }
    }
}

impl FitConfig {
    pub fn to_dplm(&self) -> CliResult<DplmConfig> {
        if self.target_dim == 0 {
            return Err(CliFailure::usage("--target-dim is required"));
        }
        let mut cfg = DplmConfig::new(self.target_dim);
        cfg.k_neighbors = self.k_neighbors;
        cfg.supervised = self.supervised;
        cfg.neighbor_metric = self.neighbor_metric.into();
        cfg.max_outer_iterations = self.max_iterations;
        cfg.grad_norm_tol = self.grad_tol;
        cfg.initial_step = self.initial_step;
        cfg.contraction = self.contraction;
        cfg.sufficient_decrease = self.sufficient_decrease;
        cfg.window = self.window;
        cfg.init = if self.random_init {
            InitKind::RandomOrthonormal {
                seed: self.init_seed,
            }
        } else {
            InitKind::CoordinateSelection
        };
        cfg.karcher = KarcherConfig {
            max_iterations: self.karcher_max_iterations,
            tolerance: self.karcher_tolerance,
            step_size: self.karcher_step,
        };
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset manifest to fit on.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub supervised: Option<bool>,
    #[arg(long, value_enum)]
    pub neighbor_metric: Option<MetricArg>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub contraction: Option<f64>,
    #[arg(long)]
    pub sufficient_decrease: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Initialize from a seeded random orthonormal matrix instead of
    /// coordinate selection.
    #[arg(long)]
    pub random_init: Option<bool>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub karcher_max_iterations: Option<usize>,
    #[arg(long)]
    pub karcher_tolerance: Option<f64>,
    #[arg(long)]
    pub karcher_step: Option<f64>,
}

pub fn run_fit(args: FitArgs) -> CliResult {
    let mut cfg: FitConfig = load_config_file(args.config.as_ref())?;
    override_with!(
        cfg,
        args,
        target_dim,
        k_neighbors,
        supervised,
        neighbor_metric,
        max_iterations,
        grad_tol,
        initial_step,
        contraction,
        sufficient_decrease,
        window,
        random_init,
        init_seed,
        karcher_max_iterations,
        karcher_tolerance,
        karcher_step
    );
    let dplm_cfg = cfg.to_dplm()?;
    let (samples, _) = io::load_dataset(&args.data)?;
    let model = dplm::dplm::fit(&samples, &dplm_cfg)?;
    io::save_dplm_model(&args.out, &model)?;
    let summary = serde_json::json!({
        "command": "fit",
        "config": cfg,
        "data": args.data,
        "model": args.out,
        "input_dim": model.input_dim(),
        "target_dim": model.target_dim(),
        "initial_objective": model.report.initial_objective(),
        "final_objective": model.report.final_objective(),
        "iterations": model.report.iterations.len() - 1,
        "status": model.report.status,
        "qr_rescues": model.report.qr_rescues,
    });
    println!("{summary}");
    Ok(())
}

// --- transform ---

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Fitted model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset manifest to project.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving the projected dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Name of the projected dataset (manifest and subdirectory).
    #[arg(long, default_value = "transformed")]
    pub name: String,
}

pub fn run_transform(args: TransformArgs) -> CliResult {
    let model = io::load_dplm_model(&args.model)?;
    let (samples, _) = io::load_dataset(&args.data)?;
    let projected: Vec<LabeledSample> = samples
        .iter()
        .map(|s| {
            Ok(LabeledSample::new(
                dplm::dplm::transform(&model, &s.matrix)?,
                s.label,
            ))
        })
        .collect::<dplm::Result<_>>()?;
    let metadata = serde_json::json!({
        "command": "transform",
        "model": args.model,
        "source": args.data,
        "config": model.config,
    });
    let manifest = io::save_dataset(&args.out, &args.name, &projected, metadata)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "transform",
            "manifest": manifest,
            "samples": projected.len(),
            "dim": model.target_dim(),
        })
    );
    Ok(())
}

// --- train ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierArg {
    #[default]
    Mdm,
    Fgmdm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub classifier: ClassifierArg,
    pub metric: MetricArg,
    /// "auto" (one fewer than the class count) or an explicit number.
    pub filters: String,
    pub karcher_max_iterations: usize,
    pub karcher_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let k = KarcherConfig::default();
        Self {
            classifier: ClassifierArg::Mdm,
            metric: MetricArg::Airm,
            filters: "auto".into(),
            karcher_max_iterations: k.max_iterations,
            karcher_tolerance: k.tolerance,
        }
    }
}

impl TrainConfig {
    fn filter_count(&self) -> CliResult<FilterCount> {
        if self.filters.trim() == "auto" {
            Ok(FilterCount::Auto)
        } else {
            self.filters
                .trim()
                .parse::<usize>()
                .map(FilterCount::Fixed)
                .map_err(|_| {
                    CliFailure::usage(format!(
                        "--filters wants 'auto' or a number, got {:?}",
                        self.filters
                    ))
                })
        }
    }

    fn karcher(&self) -> KarcherConfig {
        KarcherConfig {
            max_iterations: self.karcher_max_iterations,
            tolerance: self.karcher_tolerance,
            step_size: 1.0,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output classifier file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// "auto" or an explicit filter count (fgmdm only).
    #[arg(long)]
    pub filters: Option<String>,
    #[arg(long)]
    pub karcher_max_iterations: Option<usize>,
    #[arg(long)]
    pub karcher_tolerance: Option<f64>,
}

pub fn run_train(args: TrainArgs) -> CliResult {
    let mut cfg: TrainConfig = load_config_file(args.config.as_ref())?;
    override_with!(
        cfg,
        args,
        classifier,
        metric,
        filters,
        karcher_max_iterations,
        karcher_tolerance
    );
    let (samples, _) = io::load_dataset(&args.data)?;
    let karcher = cfg.karcher();
    let model = match cfg.classifier {
        ClassifierArg::Mdm => {
            ClassifierModel::Mdm(mdm_train_with(&samples, cfg.metric.into(), &karcher)?)
        }
        ClassifierArg::Fgmdm => ClassifierModel::Fgmdm(fgmdm_train_with(
            &samples,
            cfg.filter_count()?,
            cfg.metric.into(),
            &karcher,
        )?),
    };
    let provenance = serde_json::json!({
        "command": "train",
        "config": cfg,
        "data": args.data,
    });
    io::save_classifier(&args.out, &model, provenance)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "train",
            "model": args.out,
            "classifier": cfg.classifier,
            "dim": model.dim(),
            "samples": samples.len(),
        })
    );
    Ok(())
}

// --- eval ---

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Classifier file.
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Report file (JSON). The report is also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_eval(args: EvalArgs) -> CliResult {
    let model = io::load_classifier(&args.model)?;
    let (samples, _) = io::load_dataset(&args.data)?;
    if samples.is_empty() {
        return Err(CliFailure::from(dplm::Error::EmptyInput(
            "evaluation dataset is empty",
        )));
    }
    let truth: Vec<u32> = samples.iter().map(|s| s.label).collect();
    let predicted: Vec<u32> = samples
        .iter()
        .map(|s| model.predict(&s.matrix))
        .collect::<dplm::Result<_>>()?;
    let confusion = ConfusionMatrix::from_pairs(&truth, &predicted)?;
    let k = kappa(&confusion)?;
    let report = serde_json::json!({
        "format_version": io::FORMAT_VERSION,
        "command": "eval",
        "model": args.model,
        "data": args.data,
        "n_samples": samples.len(),
        "accuracy": confusion.accuracy(),
        "kappa": k.value,
        "kappa_degenerate": k.degenerate,
        "confusion": confusion,
    });
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!("{report}");
    Ok(())
}

// --- preproc-select ---

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PreprocConfig {
    pub window_starts: Vec<f64>,
    pub window_lengths: Vec<f64>,
    pub bands: Vec<(f64, f64)>,
    pub folds: usize,
    pub top_k: usize,
    pub cv_seed: u64,
    pub shrinkage: f64,
    pub metric: MetricArg,
    pub karcher_max_iterations: usize,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        let g = GridSearchConfig::default();
        Self {
            window_starts: g.window_starts,
            window_lengths: g.window_lengths,
            bands: g.bands,
            folds: g.folds,
            top_k: g.top_k,
            cv_seed: g.cv_seed,
            shrinkage: g.shrinkage,
            metric: MetricArg::Airm,
            karcher_max_iterations: g.karcher.max_iterations,
        }
    }
}

impl PreprocConfig {
    fn to_grid(&self) -> GridSearchConfig {
        GridSearchConfig {
            window_starts: self.window_starts.clone(),
            window_lengths: self.window_lengths.clone(),
            bands: self.bands.clone(),
            folds: self.folds,
            top_k: self.top_k,
            cv_seed: self.cv_seed,
            shrinkage: self.shrinkage,
            metric: self.metric.into(),
            karcher: KarcherConfig {
                max_iterations: self.karcher_max_iterations,
                ..Default::default()
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct PreprocArgs {
    /// Trial manifest (channels x samples CSVs).
    #[arg(long)]
    pub trials: PathBuf,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated window starts in seconds.
    #[arg(long)]
    pub window_starts: Option<String>,
    /// Comma-separated window lengths in seconds.
    #[arg(long)]
    pub window_lengths: Option<String>,
    /// Comma-separated bands, each `low-high` in Hz.
    #[arg(long)]
    pub bands: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    #[arg(long)]
    pub shrinkage: Option<f64>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub karcher_max_iterations: Option<usize>,
}

pub fn run_preproc_select(args: PreprocArgs) -> CliResult {
    let mut cfg: PreprocConfig = load_config_file(args.config.as_ref())?;
    if let Some(text) = &args.window_starts {
        cfg.window_starts = parse_f64_list(text, "window start")?;
    }
    if let Some(text) = &args.window_lengths {
        cfg.window_lengths = parse_f64_list(text, "window length")?;
    }
    if let Some(text) = &args.bands {
        cfg.bands = parse_bands(text)?;
    }
    override_with!(
        cfg,
        args,
        folds,
        top_k,
        cv_seed,
        shrinkage,
        metric,
        karcher_max_iterations
    );
    let (trials, _) = io::load_trials(&args.trials)?;
    let report = select_preproc(&trials, &cfg.to_grid())?;
    let payload = serde_json::json!({
        "format_version": io::FORMAT_VERSION,
        "command": "preproc-select",
        "config": cfg,
        "trials": args.trials,
        "selected": report.selected,
        "cv_seed": report.cv_seed,
        "skipped": report.skipped,
        "cases": report.cases,
    });
    write_json(&args.out, &payload)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "preproc-select",
            "selected": report.selected,
            "best_accuracy": report.cases.first().map(|c| c.accuracy),
            "report": args.out,
        })
    );
    Ok(())
}

// --- bench ---

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub k_neighbors: usize,
    /// 0 means "half the dimension".
    pub target_dim: usize,
    /// Optimizer iterations timed per run.
    pub iterations: usize,
    /// Runs per grid point; the median per-iteration time is reported.
    pub repetitions: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400],
            dims: vec![22],
            k_neighbors: 5,
            target_dim: 0,
            iterations: 3,
            repetitions: 3,
            noise: 0.3,
            seed: 1,
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Output CSV (columns N,n,K,seconds_per_iteration). A sibling
    /// `.meta.json` records the resolved configuration.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated sample counts.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated matrix dimensions.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Median seconds per optimizer iteration for one (N, n) grid point.
fn time_grid_point(cfg: &BenchConfig, n_samples: usize, dim: usize) -> CliResult<f64> {
    let synth_cfg = SynthConfig {
        classes: 1,
        per_class: n_samples,
        test_per_class: 0,
        dim,
        structure: Structure::Isotropic,
        block_dim: 1,
        separation: 0.8,
        noise: cfg.noise,
        background_noise: 0.0,
        seed: cfg.seed,
    };
    let (samples, _) = synth::generate(&synth_cfg)?;
    let target = if cfg.target_dim == 0 {
        (dim / 2).max(1)
    } else {
        cfg.target_dim
    };
    let mut dplm_cfg = DplmConfig::new(target);
    dplm_cfg.k_neighbors = cfg.k_neighbors;
    dplm_cfg.max_outer_iterations = cfg.iterations;
    dplm_cfg.grad_norm_tol = 1e-300;
    dplm_cfg.karcher.max_iterations = 300;

    // Neighborhoods are built once; only optimizer iterations are timed.
    let neighborhoods = build_neighborhoods(&samples, &dplm_cfg)?;
    let problem = DplmProblem::new(&samples, &neighborhoods)?;

    let mut medians = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let started = Instant::now();
        let model = fit_problem(&problem, &dplm_cfg)?;
        let elapsed = started.elapsed().as_secs_f64();
        let steps = (model.report.iterations.len() - 1).max(1);
        medians.push(elapsed / steps as f64);
    }
    medians.sort_by(f64::total_cmp);
    Ok(medians[medians.len() / 2])
}

pub fn run_bench(args: BenchArgs) -> CliResult {
    let mut cfg: BenchConfig = load_config_file(args.config.as_ref())?;
    if let Some(text) = &args.sizes {
        cfg.sizes = parse_usize_list(text, "size")?;
    }
    if let Some(text) = &args.dims {
        cfg.dims = parse_usize_list(text, "dim")?;
    }
    override_with!(
        cfg,
        args,
        k_neighbors,
        target_dim,
        iterations,
        repetitions,
        noise,
        seed
    );
    if cfg.sizes.is_empty() || cfg.dims.is_empty() {
        return Err(CliFailure::usage("sizes and dims must be nonempty"));
    }
    if cfg.iterations == 0 || cfg.repetitions == 0 {
        return Err(CliFailure::usage("iterations and repetitions must be >= 1"));
    }

    let mut csv = String::from("N,n,K,seconds_per_iteration\n");
    for &dim in &cfg.dims {
        for &n_samples in &cfg.sizes {
            let seconds = time_grid_point(&cfg, n_samples, dim)?;
            csv.push_str(&format!(
                "{n_samples},{dim},{},{seconds}\n",
                cfg.k_neighbors
            ));
        }
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(dplm::Error::from)?;
        }
    }
    fs::write(&args.out, &csv).map_err(dplm::Error::from)?;
    let meta_path = args.out.with_extension("meta.json");
    write_json(
        &meta_path,
        &serde_json::json!({
            "format_version": io::FORMAT_VERSION,
            "command": "bench",
            "config": cfg,
        }),
    )?;
    print!("{csv}");
    Ok(())
}
