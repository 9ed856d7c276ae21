//! Statistical descriptors of one steady-state output cycle.
//!
//! Beyond the DC level and the peak-to-peak ripple, the corrector uses
//! higher-order moments of the ripple waveform (standard deviation,
//! skewness, kurtosis, crest factor) because they carry the distortion
//! signature of non-ideal conduction. Conventions, fixed here and recorded
//! in the dataset schema comment:
//!
//! * population (divide-by-n) moments, so `std_dev == v_rms` exactly;
//! * non-excess (Pearson) kurtosis, 3.0 for a Gaussian, 1.5 for a sine;
//! * crest factor of the AC component, `max|v - mean| / v_rms`.

use crate::circuit::CycleWaveform;
use crate::error::{Error, Result};

/// Fewest samples that still make the fourth moment meaningful.
pub const MIN_SAMPLES: usize = 16;

/// Relative RMS floor below which a waveform counts as ripple-free.
pub const DEGENERATE_RMS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RippleFeatures {
    /// Mean voltage over the cycle, volts.
    pub v_dc: f64,
    /// Peak-to-peak ripple, volts.
    pub v_pp: f64,
    /// RMS of the AC component, volts.
    pub v_rms: f64,
    /// Population standard deviation; identical to `v_rms` by construction,
    /// kept as its own column for schema fidelity.
    pub std_dev: f64,
    pub skewness: f64,
    /// Non-excess kurtosis.
    pub kurtosis: f64,
    /// `max|AC| / v_rms`.
    pub crest_factor: f64,
    /// True when the ripple is numerically zero; the shape features are
    /// reported as 0 in that case.
    pub degenerate: bool,
}

/// Neumaier-compensated sum; keeps the moment passes exact enough for the
/// offset-invariance contract (1e-12 relative).
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Extract the ripple descriptors from a steady-state cycle.
pub fn extract_features(waveform: &CycleWaveform) -> Result<RippleFeatures> {
    extract_from_samples(&waveform.samples)
}

/// Same extraction for a bare sample slice (waveform files, tests).
pub fn extract_from_samples(samples: &[f64]) -> Result<RippleFeatures> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: samples.len(), min: MIN_SAMPLES });
    }
    let n = samples.len() as f64;

    // Two-pass mean with a correction pass: the residual mean of the
    // centered samples is folded back so that the AC component has a mean
    // that is zero to machine precision even on large DC offsets.
    let mean0 = compensated_sum(samples.iter().copied()) / n;
    let mean_resid = compensated_sum(samples.iter().map(|v| v - mean0)) / n;
    let v_dc = mean0 + mean_resid;

    let mut max_v = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    for &v in samples {
        max_v = max_v.max(v);
        min_v = min_v.min(v);
    }
    let v_pp = max_v - min_v;

    let ac = |v: f64| (v - mean0) - mean_resid;
    let m2 = compensated_sum(samples.iter().map(|&v| ac(v).powi(2))) / n;
    let v_rms = m2.max(0.0).sqrt();

    if v_rms < DEGENERATE_RMS_FLOOR * v_dc.abs().max(1.0) {
        return Ok(RippleFeatures {
            v_dc,
            v_pp,
            v_rms,
            std_dev: v_rms,
            skewness: 0.0,
            kurtosis: 0.0,
            crest_factor: 0.0,
            degenerate: true,
        });
    }

    let m3 = compensated_sum(samples.iter().map(|&v| ac(v).powi(3))) / n;
    let m4 = compensated_sum(samples.iter().map(|&v| ac(v).powi(4))) / n;
    let peak = samples.iter().map(|&v| ac(v).abs()).fold(0.0, f64::max);

    Ok(RippleFeatures {
        v_dc,
        v_pp,
        v_rms,
        std_dev: v_rms,
        skewness: m3 / (v_rms * v_rms * v_rms),
        kurtosis: m4 / (m2 * m2),
        crest_factor: peak / v_rms,
        degenerate: false,
    })
}
