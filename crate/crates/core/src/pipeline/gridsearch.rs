//! Cross-validated selection of the preprocessing window and band.
//!
//! Every (window, band) test case filters and windows the trials, builds
//! covariance descriptors, and scores them with stratified k-fold
//! cross-validation of an MDM classifier. The returned spec is the mean of
//! the top-ranked cases, so fractional window edges are expected.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSearchConfig, PreprocSpec, TrialSignal};
use crate::classify::{mdm_predict, mdm_train_with};
use crate::dplm::LabeledSample;
use crate::error::{Error, Result};
use crate::geometry::KarcherConfig;

/// Accuracy of one evaluated test case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseScore {
    pub spec: PreprocSpec,
    pub accuracy: f64,
}

/// Outcome of the grid search, ranked best first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub selected: PreprocSpec,
    /// Seed that fixed the fold assignment.
    pub cv_seed: u64,
    /// All evaluated cases, ranked.
    pub cases: Vec<CaseScore>,
    /// Grid entries whose window did not fit the trials.
    pub skipped: usize,
}

/// Deterministic stratified fold assignment: indices of each class are
/// shuffled with the seeded generator and dealt round-robin.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("folds must be >= 2".into()));
    }
    let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for (&label, members) in by_class.iter_mut() {
        if members.len() < folds {
            return Err(Error::ClassTooSmall {
                label,
                size: members.len(),
                required: folds,
            });
        }
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            assignment[idx] = pos % folds;
        }
    }
    Ok(assignment)
}

fn cross_validated_accuracy(
    samples: &[LabeledSample],
    fold_of: &[usize],
    folds: usize,
    metric: crate::geometry::MetricKind,
    karcher: &KarcherConfig,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..folds {
        let train: Vec<LabeledSample> = samples
            .iter()
            .zip(fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|(s, _)| s.clone())
            .collect();
        let model = mdm_train_with(&train, metric, karcher)?;
        for (s, _) in samples.iter().zip(fold_of).filter(|(_, &f)| f == fold) {
            total += 1;
            if mdm_predict(&model, &s.matrix)? == s.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Evaluates the whole grid and returns the mean of the `top_k` best cases
/// (ties broken by lower band edge, then earlier and shorter windows).
pub fn select_preproc(trials: &[TrialSignal], cfg: &GridSearchConfig) -> Result<GridSearchReport> {
    cfg.validate()?;
    if trials.is_empty() {
        return Err(Error::EmptyInput("select_preproc needs trials"));
    }

    let labels: Vec<u32> = trials.iter().map(|t| t.label).collect();
    let fold_of = stratified_folds(&labels, cfg.folds, cfg.cv_seed)?;

    // Enumerate the grid, dropping cases that no trial can satisfy.
    let mut specs = Vec::new();
    let mut skipped = 0usize;
    for &start in &cfg.window_starts {
        for &length in &cfg.window_lengths {
            for &(low, high) in &cfg.bands {
                let spec = PreprocSpec {
                    window_start: start,
                    window_end: start + length,
                    band_low: low,
                    band_high: high,
                };
                let fits = trials.iter().all(|t| {
                    spec.validate(t.sample_rate()).is_ok()
                        && spec.window_start >= t.trial_t0 - 0.5 / t.sample_rate()
                        && spec.window_end <= t.trial_t0 + t.duration() + 0.5 / t.sample_rate()
                });
                if fits {
                    specs.push(spec);
                } else {
                    skipped += 1;
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::InvalidConfig(
            "no grid case fits the provided trials".into(),
        ));
    }

    // Cases are independent; evaluate in parallel, rank deterministically.
    let scored: Vec<Result<CaseScore>> = specs
        .par_iter()
        .map(|spec| {
            let samples = super::run_pipeline(trials, spec, cfg.shrinkage)?;
            let accuracy =
                cross_validated_accuracy(&samples, &fold_of, cfg.folds, cfg.metric, &cfg.karcher)?;
            Ok(CaseScore {
                spec: *spec,
                accuracy,
            })
        })
        .collect();
    let mut cases: Vec<CaseScore> = scored.into_iter().collect::<Result<_>>()?;
    cases.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then_with(|| a.spec.band_low.total_cmp(&b.spec.band_low))
            .then_with(|| a.spec.window_start.total_cmp(&b.spec.window_start))
            .then_with(|| {
                (a.spec.window_end - a.spec.window_start)
                    .total_cmp(&(b.spec.window_end - b.spec.window_start))
            })
    });

    let top = cases.len().min(cfg.top_k);
    let mean = |f: fn(&PreprocSpec) -> f64| -> f64 {
        cases[..top].iter().map(|c| f(&c.spec)).sum::<f64>() / top as f64
    };
    let selected = PreprocSpec {
        window_start: mean(|s| s.window_start),
        window_end: mean(|s| s.window_end),
        band_low: mean(|s| s.band_low),
        band_high: mean(|s| s.band_high),
    };

    Ok(GridSearchReport {
        selected,
        cv_seed: cfg.cv_seed,
        cases,
        skipped,
    })
}
