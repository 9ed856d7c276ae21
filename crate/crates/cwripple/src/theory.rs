//! Classical closed-form model of the half-wave CW multiplier.
//!
//! These are the textbook relations every design starts from: the ideal
//! no-load output `2·N·V_in`, the peak-to-peak ripple
//! `(I_L / (f·C)) · N(N+1)/2`, and the ripple factor `V_rms / V_dc`. They
//! assume ideal diodes, identical stage capacitors and steady state, which
//! is exactly why they drift from reality; the rest of the crate measures
//! and corrects that drift. All quantities are SI base units (V, A, F, Hz,
//! Ω); engineering units exist only at the CLI and file boundary.

use crate::error::{Error, Result};

/// DC reference magnitudes below this are rejected by [`ripple_factor`].
pub const MIN_DC_REFERENCE_V: f64 = 1e-9;

/// Inputs of the classical ripple model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    /// Number of multiplier stages N (one diode-capacitor pair per column
    /// per stage, 2N of each in total).
    pub n_stages: u32,
    /// Peak AC input amplitude in volts.
    pub vin_peak: f64,
    /// Drive frequency in hertz.
    pub freq: f64,
    /// Stage capacitance in farads (all 2N capacitors identical).
    pub cap: f64,
    /// Load current in amperes.
    pub i_load: f64,
}

impl TheoryInputs {
    pub fn new(n_stages: u32, vin_peak: f64, freq: f64, cap: f64, i_load: f64) -> Result<Self> {
        let inputs = Self { n_stages, vin_peak, freq, cap, i_load };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stages < 1 {
            return Err(Error::InvalidParameter("n_stages must be >= 1".into()));
        }
        if !(self.vin_peak > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "vin_peak must be > 0 V, got {}",
                self.vin_peak
            )));
        }
        if !(self.freq > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "freq must be > 0 Hz, got {}",
                self.freq
            )));
        }
        if !(self.cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cap must be > 0 F, got {}",
                self.cap
            )));
        }
        if !(self.i_load >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "i_load must be >= 0 A, got {}",
                self.i_load
            )));
        }
        Ok(())
    }
}

/// Ideal no-load output voltage `2·N·V_in`.
pub fn ideal_output_voltage(n_stages: u32, vin_peak: f64) -> Result<f64> {
    if n_stages < 1 {
        return Err(Error::InvalidParameter("n_stages must be >= 1".into()));
    }
    if !(vin_peak > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "vin_peak must be > 0 V, got {vin_peak}"
        )));
    }
    Ok(2.0 * f64::from(n_stages) * vin_peak)
}

/// Classical peak-to-peak output ripple `(I_L / (f·C)) · N(N+1)/2`.
///
/// Returns exactly 0 at zero load current.
pub fn theoretical_ripple_pp(inputs: &TheoryInputs) -> Result<f64> {
    inputs.validate()?;
    let fc = inputs.freq * inputs.cap;
    if !(fc > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "f*C must be > 0, got {fc}"
        )));
    }
    if inputs.i_load == 0.0 {
        return Ok(0.0);
    }
    let n = f64::from(inputs.n_stages);
    Ok(inputs.i_load / fc * (n * (n + 1.0) / 2.0))
}

/// Ripple factor `V_rms / |V_dc|`.
pub fn ripple_factor(v_rms_ripple: f64, v_dc: f64) -> Result<f64> {
    if !(v_rms_ripple >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "v_rms_ripple must be >= 0 V, got {v_rms_ripple}"
        )));
    }
    if !(v_dc.abs() >= MIN_DC_REFERENCE_V) {
        return Err(Error::DegenerateInput(format!(
            "|v_dc| = {:.3e} V is below the {MIN_DC_REFERENCE_V:.0e} V reference floor",
            v_dc.abs()
        )));
    }
    Ok(v_rms_ripple / v_dc.abs())
}

/// Load current from the DC output voltage, `V_dc / R_load`.
pub fn load_current(v_dc: f64, r_load: f64) -> Result<f64> {
    if !(r_load > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_load must be > 0 ohm, got {r_load}"
        )));
    }
    Ok(v_dc / r_load)
}

/// RMS of an ideal sawtooth of peak-to-peak amplitude `v_pp`:
/// `v_pp / (2·sqrt(3))`.
///
/// The classical model gives ripple as a peak-to-peak value; converting it
/// to an RMS for the ripple factor assumes the idealized sawtooth discharge
/// shape. The convention is recorded in the dataset schema comment.
pub fn sawtooth_rms_from_pp(v_pp: f64) -> f64 {
    v_pp / (2.0 * 3.0_f64.sqrt())
}
