//! Signal-to-descriptor preprocessing: zero-phase band-pass filtering, time
//! window extraction, covariance descriptors, and the cross-validated
//! window/band grid search.

mod filter;
mod gridsearch;

pub use gridsearch::{select_preproc, stratified_folds, CaseScore, GridSearchReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dplm::LabeledSample;
use crate::error::{Error, Result};
use crate::geometry::MetricKind;
use crate::linalg::SpdMatrix;

/// Default analog prototype order of the band-pass (the digital filter has
/// twice as many poles).
pub const DEFAULT_FILTER_ORDER: usize = 4;

/// A multichannel time-series segment with its class label and its position
/// on the trial timeline.
#[derive(Debug, Clone)]
pub struct TrialSignal {
    /// channels x samples.
    data: DMatrix<f64>,
    sample_rate: f64,
    pub label: u32,
    /// Absolute time (seconds) of the first sample.
    pub trial_t0: f64,
}

impl TrialSignal {
    pub fn new(data: DMatrix<f64>, sample_rate: f64, label: u32, trial_t0: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput("trial needs channels and samples"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if !trial_t0.is_finite() || data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(Self {
            data,
            sample_rate,
            label,
            trial_t0,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Seconds covered by the trial.
    pub fn duration(&self) -> f64 {
        self.samples() as f64 / self.sample_rate
    }
}

/// A resolved preprocessing choice: time window plus frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocSpec {
    pub window_start: f64,
    pub window_end: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl PreprocSpec {
    /// The conventional subject-independent baseline: 8-35 Hz over the
    /// 3.75-5.75 s window.
    pub fn fixed_baseline() -> Self {
        Self {
            window_start: 3.75,
            window_end: 5.75,
            band_low: 8.0,
            band_high: 35.0,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.window_end > self.window_start) {
            return Err(Error::InvalidConfig(format!(
                "window_end must exceed window_start, got [{}, {}]",
                self.window_start, self.window_end
            )));
        }
        if !(self.band_low > 0.0
            && self.band_low < self.band_high
            && self.band_high < sample_rate / 2.0)
        {
            return Err(Error::InvalidBand(format!(
                "need 0 < low < high < Nyquist, got [{}, {}] at {} Hz",
                self.band_low, self.band_high, sample_rate
            )));
        }
        Ok(())
    }
}

/// Grid-search settings for [`select_preproc`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchConfig {
    pub window_starts: Vec<f64>,
    pub window_lengths: Vec<f64>,
    /// (low, high) Hz pairs.
    pub bands: Vec<(f64, f64)>,
    pub folds: usize,
    /// The selected spec averages this many top-ranked cases.
    pub top_k: usize,
    /// Seed of the stratified fold assignment, echoed in the report.
    pub cv_seed: u64,
    /// Covariance shrinkage used while scoring cases.
    pub shrinkage: f64,
    /// Metric of the MDM scorer.
    pub metric: MetricKind,
    /// Mean-iteration settings for the MDM scorer. Spread covariance sets
    /// converge slowly, so the scorer gets a larger budget than the library
    /// default.
    pub karcher: crate::geometry::KarcherConfig,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            window_starts: (0..=10).map(|i| 3.0 + i as f64 * 0.05).collect(),
            window_lengths: (0..=12).map(|i| 1.0 + i as f64 * 0.25).collect(),
            bands: vec![(5.0, 30.0), (5.0, 35.0), (8.0, 30.0), (8.0, 35.0)],
            folds: 10,
            top_k: 10,
            cv_seed: 42,
            shrinkage: 0.01,
            metric: MetricKind::Airm,
            karcher: crate::geometry::KarcherConfig {
                max_iterations: 300,
                ..Default::default()
            },
        }
    }
}

impl GridSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_starts.is_empty() || self.window_lengths.is_empty() || self.bands.is_empty()
        {
            return Err(Error::InvalidConfig("grid lists must be nonempty".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be >= 2".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return Err(Error::InvalidConfig("shrinkage must be in [0, 1)".into()));
        }
        if self.window_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidConfig(
                "window lengths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Zero-phase Butterworth band-pass (default order), per channel.
pub fn bandpass(signal: &TrialSignal, low_hz: f64, high_hz: f64) -> Result<TrialSignal> {
    bandpass_with_order(signal, low_hz, high_hz, DEFAULT_FILTER_ORDER)
}

/// Zero-phase Butterworth band-pass with an explicit prototype order.
pub fn bandpass_with_order(
    signal: &TrialSignal,
    low_hz: f64,
    high_hz: f64,
    order: usize,
) -> Result<TrialSignal> {
    let f = filter::design_bandpass(order, low_hz, high_hz, signal.sample_rate)?;
    let mut out = signal.data.clone();
    for ch in 0..signal.channels() {
        let row: Vec<f64> = signal.data.row(ch).iter().copied().collect();
        let filtered = f.filtfilt(&row)?;
        for (s, v) in filtered.into_iter().enumerate() {
            out[(ch, s)] = v;
        }
    }
    TrialSignal::new(out, signal.sample_rate, signal.label, signal.trial_t0)
}

/// Extracts the sample range
/// `[round((start - t0) * rate), round((end - t0) * rate))`.
pub fn extract_window(signal: &TrialSignal, start: f64, end: f64) -> Result<TrialSignal> {
    let rate = signal.sample_rate;
    let first = ((start - signal.trial_t0) * rate).round() as i64;
    let last = ((end - signal.trial_t0) * rate).round() as i64;
    if first < 0 || last > signal.samples() as i64 || first >= last {
        return Err(Error::WindowOutOfRange { start, end });
    }
    let (first, last) = (first as usize, last as usize);
    let data = signal.data.columns(first, last - first).into_owned();
    TrialSignal::new(data, rate, signal.label, start)
}

/// Channel covariance `C = X X' / (N - 1)`, shrunk toward a scaled identity:
/// `(1 - g) C + g (trace(C) / channels) I`.
pub fn covariance_descriptor(signal: &TrialSignal, shrinkage: f64) -> Result<SpdMatrix> {
    if !(0.0..1.0).contains(&shrinkage) {
        return Err(Error::InvalidConfig(format!(
            "shrinkage must be in [0, 1), got {shrinkage}"
        )));
    }
    if signal.samples() < 2 {
        return Err(Error::SignalTooShort {
            samples: signal.samples(),
            required: 1,
        });
    }
    let x = &signal.data;
    let c = (x * x.transpose()) / (signal.samples() as f64 - 1.0);
    let target = c.trace() / signal.channels() as f64;
    let shrunk = &c * (1.0 - shrinkage)
        + DMatrix::<f64>::identity(signal.channels(), signal.channels()) * (shrinkage * target);
    SpdMatrix::new(shrunk).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } if shrinkage == 0.0 => Error::RankDeficientCovariance,
        other => other,
    })
}

/// Full preprocessing of a trial set: band-pass, window, covariance. Labels
/// and order are preserved.
pub fn run_pipeline(
    trials: &[TrialSignal],
    spec: &PreprocSpec,
    shrinkage: f64,
) -> Result<Vec<LabeledSample>> {
    trials
        .iter()
        .map(|t| {
            spec.validate(t.sample_rate())?;
            let filtered = bandpass(t, spec.band_low, spec.band_high)?;
            let windowed = extract_window(&filtered, spec.window_start, spec.window_end)?;
            let cov = covariance_descriptor(&windowed, shrinkage)?;
            Ok(LabeledSample::new(cov, t.label))
        })
        .collect()
}
