//! Butterworth band-pass design and zero-phase filtering.
//!
//! The design path mirrors the classic analog-prototype route: Butterworth
//! poles, low-pass-to-band-pass transform, bilinear transform, then pairing
//! into second-order sections. Zero-phase filtering runs the cascade forward
//! and backward over an odd-reflection extension of the signal, with each
//! section started from its steady state.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SosFilter {
    sections: Vec<Biquad>,
}

/// Designs a digital Butterworth band-pass of the given analog prototype
/// order (the digital filter has `2 * order` poles).
pub(crate) fn design_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    sample_rate: f64,
) -> Result<SosFilter> {
    if order == 0 {
        return Err(Error::InvalidConfig("filter order must be >= 1".into()));
    }
    let nyquist = sample_rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidBand(format!(
            "need 0 < low < high < {nyquist} Hz, got [{low_hz}, {high_hz}]"
        )));
    }

    // Frequencies normalized to Nyquist, pre-warped for the bilinear
    // transform at the internal rate fs = 2.
    let warp = |w: f64| 4.0 * (std::f64::consts::PI * w / 2.0).tan();
    let warped_low = warp(low_hz / nyquist);
    let warped_high = warp(high_hz / nyquist);
    let bandwidth = warped_high - warped_low;
    let center = (warped_low * warped_high).sqrt();

    // Analog low-pass prototype: poles on the unit circle, left half-plane.
    let prototype: Vec<Complex64> = (1..=order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    // Low-pass to band-pass: each prototype pole splits into two.
    let mut poles: Vec<Complex64> = Vec::with_capacity(2 * order);
    for p in &prototype {
        let scaled = p * (bandwidth / 2.0);
        let offset = (scaled * scaled - center * center).sqrt();
        poles.push(scaled + offset);
        poles.push(scaled - offset);
    }
    let gain_bp = bandwidth.powi(order as i32);

    // Bilinear transform at fs = 2 (fs2 = 4). The band-pass has `order`
    // zeros at s = 0, which land on z = +1; the remaining `order` zeros sit
    // at z = -1.
    let fs2 = 4.0;
    let mut digital_poles = Vec::with_capacity(poles.len());
    let mut denom = Complex64::new(1.0, 0.0);
    for p in &poles {
        digital_poles.push((fs2 + p) / (fs2 - p));
        denom *= fs2 - p;
    }
    let numer = Complex64::new(fs2, 0.0).powi(order as i32);
    let gain = gain_bp * (numer / denom).re;

    // Pair poles into biquads: conjugate pairs, plus real poles paired
    // among themselves (odd prototype orders put two real poles on the
    // band-pass).
    let mut upper: Vec<Complex64> = digital_poles
        .iter()
        .copied()
        .filter(|p| p.im > 1e-10)
        .collect();
    let mut real: Vec<f64> = digital_poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-10)
        .map(|p| p.re)
        .collect();
    upper.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then_with(|| a.re.total_cmp(&b.re))
    });
    real.sort_by(f64::total_cmp);
    if upper.len() * 2 + real.len() != 2 * order || !real.len().is_multiple_of(2) {
        return Err(Error::InvalidConfig(
            "band-pass pole pairing failed; band edges too extreme for this rate".into(),
        ));
    }

    let mut denominators: Vec<(f64, f64)> =
        upper.iter().map(|p| (-2.0 * p.re, p.norm_sqr())).collect();
    denominators.extend(
        real.chunks(2)
            .map(|pair| (-(pair[0] + pair[1]), pair[0] * pair[1])),
    );

    // Every section takes one zero at +1 and one at -1: numerator z^2 - 1.
    // Gain is spread evenly to keep intermediate signals well scaled.
    let n_sections = denominators.len();
    let magnitude = gain.abs().powf(1.0 / n_sections as f64);
    let sections = denominators
        .into_iter()
        .enumerate()
        .map(|(i, (a1, a2))| {
            let g = if i == 0 && gain < 0.0 {
                -magnitude
            } else {
                magnitude
            };
            Biquad {
                b0: g,
                b1: 0.0,
                b2: -g,
                a1,
                a2,
            }
        })
        .collect();
    Ok(SosFilter { sections })
}

impl Biquad {
    /// Steady-state (direct-form II transposed) state for a constant unit
    /// input, and the section's DC gain.
    fn steady_state(&self) -> (f64, f64, f64) {
        let dc = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        (dc - self.b0, self.b2 - self.a2 * dc, dc)
    }
}

impl SosFilter {
    #[cfg(test)]
    pub(crate) fn sections(&self) -> usize {
        self.sections.len()
    }

    /// Samples of warm-up context required on each side for zero-phase
    /// filtering.
    pub(crate) fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Single forward pass with steady-state initial conditions scaled to
    /// the first sample.
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut data = x.to_vec();
        let mut scale = data.first().copied().unwrap_or(0.0);
        for section in &self.sections {
            let (z1_unit, z2_unit, dc) = section.steady_state();
            let mut z1 = z1_unit * scale;
            let mut z2 = z2_unit * scale;
            for v in data.iter_mut() {
                let x_in = *v;
                let y = section.b0 * x_in + z1;
                z1 = section.b1 * x_in - section.a1 * y + z2;
                z2 = section.b2 * x_in - section.a2 * y;
                *v = y;
            }
            scale *= dc;
        }
        data
    }

    /// Forward-backward (zero-phase) filtering over an odd-reflection
    /// extension of the signal. Output length equals input length.
    pub(crate) fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(Error::SignalTooShort {
                samples: x.len(),
                required: pad,
            });
        }
        let n = x.len();
        let first = x[0];
        let last = x[n - 1];
        let mut extended = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            extended.push(2.0 * first - x[i]);
        }
        extended.extend_from_slice(x);
        for i in 1..=pad {
            extended.push(2.0 * last - x[n - 1 - i]);
        }

        let mut filtered = self.forward(&extended);
        filtered.reverse();
        let mut back = self.forward(&filtered);
        back.reverse();
        Ok(back[pad..pad + n].to_vec())
    }

    /// Magnitude response of a single pass at the given frequency.
    #[cfg(test)]
    pub(crate) fn magnitude_at(&self, hz: f64, sample_rate: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * hz / sample_rate;
        let z_inv = Complex64::new(0.0, -omega).exp();
        self.sections
            .iter()
            .map(|s| {
                let num = s.b0 + s.b1 * z_inv + s.b2 * z_inv * z_inv;
                let den = 1.0 + s.a1 * z_inv + s.a2 * z_inv * z_inv;
                (num / den).norm()
            })
            .product()
    }
}
