//! On-disk formats: CSV matrices, dataset and trial manifests, and model
//! files.
//!
//! Matrices travel as headerless CSV (one row per line, dimensions
//! inferred); everything structured is JSON. Floats are written in the
//! shortest decimal form that parses back to the identical bit pattern, so
//! every artifact round-trips exactly and reruns diff clean.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierModel, FgdaMetadata, FgmdmModel, MdmModel};
use crate::dplm::{DplmConfig, DplmModel, LabeledSample, TrainingReport};
use crate::error::{Error, Result};
use crate::geometry::MetricKind;
use crate::linalg::{SpdMatrix, StiefelPoint};
use crate::pipeline::TrialSignal;

/// Version tag embedded in every artifact this crate writes.
pub const FORMAT_VERSION: &str = "1";

// --- matrices ---

/// Row-major dense matrix payload for JSON artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix payload has {} entries for a {}x{} shape",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Headerless CSV encoding, one row per line.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Parses headerless CSV; dimensions are inferred from the content.
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {cell:?}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::EmptyInput("matrix CSV has no rows"));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_slice(
        nrows,
        ncols,
        &rows.into_iter().flatten().collect::<Vec<_>>(),
    ))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    matrix_from_csv(&text)
}

// --- datasets of labeled SPD samples ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub label: u32,
    /// CSV path relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub dim: usize,
    pub samples: Vec<SampleEntry>,
    /// Free-form provenance (generator settings, resolved CLI config, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Writes `<dir>/<name>.json` plus one CSV per sample under `<dir>/<name>/`.
pub fn save_dataset(
    dir: &Path,
    name: &str,
    samples: &[LabeledSample],
    metadata: serde_json::Value,
) -> Result<PathBuf> {
    let first = samples
        .first()
        .ok_or(Error::EmptyInput("dataset needs samples"))?;
    let dim = first.matrix.dim();
    let subdir = dir.join(name);
    fs::create_dir_all(&subdir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.matrix.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.matrix.dim(),
            });
        }
        let rel = format!("{name}/{i:04}.csv");
        write_matrix_csv(&dir.join(&rel), s.matrix.matrix())?;
        entries.push(SampleEntry {
            label: s.label,
            path: rel,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION.into(),
        dim,
        samples: entries,
        metadata,
    };
    let manifest_path = dir.join(format!("{name}.json"));
    fs::write(&manifest_path, to_json_pretty(&manifest)?)?;
    Ok(manifest_path)
}

pub fn load_dataset(manifest_path: &Path) -> Result<(Vec<LabeledSample>, DatasetManifest)> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    check_version(&manifest.format_version)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let m = read_matrix_csv(&base.join(&entry.path))?;
        if m.nrows() != manifest.dim || m.ncols() != manifest.dim {
            return Err(Error::Format(format!(
                "{}: expected {0}x{0} matrix per manifest dim, got {1}x{2}",
                entry.path,
                m.nrows(),
                m.ncols()
            )));
        }
        samples.push(LabeledSample::new(SpdMatrix::new(m)?, entry.label));
    }
    Ok((samples, manifest))
}

// --- trial datasets ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialEntry {
    pub label: u32,
    /// CSV path (channels rows x samples columns) relative to the manifest.
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialManifest {
    pub format_version: String,
    pub sample_rate: f64,
    /// Absolute time of every trial's first sample.
    pub trial_t0: f64,
    pub trials: Vec<TrialEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Writes `<dir>/<name>.json` plus one CSV per trial. All trials must share
/// the manifest's sample rate and start time.
pub fn save_trials(
    dir: &Path,
    name: &str,
    trials: &[TrialSignal],
    metadata: serde_json::Value,
) -> Result<PathBuf> {
    let first = trials
        .first()
        .ok_or(Error::EmptyInput("trial set needs trials"))?;
    let rate = first.sample_rate();
    let t0 = first.trial_t0;
    let subdir = dir.join(name);
    fs::create_dir_all(&subdir)?;
    let mut entries = Vec::with_capacity(trials.len());
    for (i, t) in trials.iter().enumerate() {
        if t.sample_rate() != rate || t.trial_t0 != t0 {
            return Err(Error::InvalidConfig(
                "all trials in one manifest must share sample_rate and trial_t0".into(),
            ));
        }
        let rel = format!("{name}/{i:04}.csv");
        write_matrix_csv(&dir.join(&rel), t.data())?;
        entries.push(TrialEntry {
            label: t.label,
            path: rel,
        });
    }
    let manifest = TrialManifest {
        format_version: FORMAT_VERSION.into(),
        sample_rate: rate,
        trial_t0: t0,
        trials: entries,
        metadata,
    };
    let manifest_path = dir.join(format!("{name}.json"));
    fs::write(&manifest_path, to_json_pretty(&manifest)?)?;
    Ok(manifest_path)
}

pub fn load_trials(manifest_path: &Path) -> Result<(Vec<TrialSignal>, TrialManifest)> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let manifest: TrialManifest = serde_json::from_str(&text)?;
    check_version(&manifest.format_version)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let data = read_matrix_csv(&base.join(&entry.path))?;
        trials.push(TrialSignal::new(
            data,
            manifest.sample_rate,
            entry.label,
            manifest.trial_t0,
        )?);
    }
    Ok((trials, manifest))
}

// --- models ---

#[derive(Debug, Serialize, Deserialize)]
struct DplmModelFile {
    format_version: String,
    /// Input dimension.
    n: usize,
    /// Target dimension.
    m: usize,
    k_neighbors: usize,
    /// Row-major entries of the projection.
    projection: Vec<f64>,
    config: DplmConfig,
    training_report: TrainingReport,
}

pub fn save_dplm_model(path: &Path, model: &DplmModel) -> Result<()> {
    let file = DplmModelFile {
        format_version: FORMAT_VERSION.into(),
        n: model.input_dim(),
        m: model.target_dim(),
        k_neighbors: model.config.k_neighbors,
        projection: MatrixData::from_matrix(model.projection.matrix()).data,
        config: model.config.clone(),
        training_report: model.report.clone(),
    };
    fs::write(path, to_json_pretty(&file)?)?;
    Ok(())
}

pub fn load_dplm_model(path: &Path) -> Result<DplmModel> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let file: DplmModelFile = serde_json::from_str(&text)?;
    check_version(&file.format_version)?;
    let data = MatrixData {
        rows: file.n,
        cols: file.m,
        data: file.projection,
    };
    Ok(DplmModel {
        projection: StiefelPoint::new(data.to_matrix()?)?,
        config: file.config,
        report: file.training_report,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassMeanEntry {
    label: u32,
    mean: MatrixData,
}

/// Serialized classifier, tagged by kind.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "kebab-case")]
enum ClassifierModelFile {
    Mdm {
        format_version: String,
        metric: MetricKind,
        class_means: Vec<ClassMeanEntry>,
        #[serde(default)]
        provenance: serde_json::Value,
    },
    Fgmdm {
        format_version: String,
        metric: MetricKind,
        reference: MatrixData,
        filters: MatrixData,
        class_means: Vec<ClassMeanEntry>,
        metadata: FgdaMetadata,
        #[serde(default)]
        provenance: serde_json::Value,
    },
}

fn mdm_to_entries(model: &MdmModel) -> Vec<ClassMeanEntry> {
    model
        .class_means()
        .iter()
        .map(|(&label, mean)| ClassMeanEntry {
            label,
            mean: MatrixData::from_matrix(mean.matrix()),
        })
        .collect()
}

fn entries_to_mdm(entries: Vec<ClassMeanEntry>, metric: MetricKind) -> Result<MdmModel> {
    let mut means = std::collections::BTreeMap::new();
    for e in entries {
        means.insert(e.label, SpdMatrix::new(e.mean.to_matrix()?)?);
    }
    MdmModel::from_parts(means, metric)
}

/// Writes a classifier model; `provenance` is an opaque echo of whatever
/// configuration produced it.
pub fn save_classifier(
    path: &Path,
    model: &ClassifierModel,
    provenance: serde_json::Value,
) -> Result<()> {
    let file = match model {
        ClassifierModel::Mdm(m) => ClassifierModelFile::Mdm {
            format_version: FORMAT_VERSION.into(),
            metric: m.metric(),
            class_means: mdm_to_entries(m),
            provenance,
        },
        ClassifierModel::Fgmdm(f) => ClassifierModelFile::Fgmdm {
            format_version: FORMAT_VERSION.into(),
            metric: f.inner.metric(),
            reference: MatrixData::from_matrix(f.reference.matrix()),
            filters: MatrixData::from_matrix(&f.filters),
            class_means: mdm_to_entries(&f.inner),
            metadata: f.metadata.clone(),
            provenance,
        },
    };
    fs::write(path, to_json_pretty(&file)?)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let file: ClassifierModelFile = serde_json::from_str(&text)?;
    match file {
        ClassifierModelFile::Mdm {
            format_version,
            metric,
            class_means,
            ..
        } => {
            check_version(&format_version)?;
            Ok(ClassifierModel::Mdm(entries_to_mdm(class_means, metric)?))
        }
        ClassifierModelFile::Fgmdm {
            format_version,
            metric,
            reference,
            filters,
            class_means,
            metadata,
            ..
        } => {
            check_version(&format_version)?;
            Ok(ClassifierModel::Fgmdm(FgmdmModel {
                reference: SpdMatrix::new(reference.to_matrix()?)?,
                filters: filters.to_matrix()?,
                inner: entries_to_mdm(class_means, metric)?,
                metadata,
            }))
        }
    }
}

fn check_version(version: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {version:?}, expected {FORMAT_VERSION:?}"
        )));
    }
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}
