//! Fixed-step transient simulation of the N-stage half-wave CW multiplier.
//!
//! The simulator integrates the ladder with backward Euler (L-stable, which
//! the stiff ESR charging spikes require), resolves the piecewise-linear
//! diode states per step by fixed-point sweeps, and runs whole input cycles
//! until the cycle-mean output voltage settles. Only the final steady cycle
//! is returned; ripple metrics are taken from it.

mod netlist;
mod solver;

pub use netlist::{build_netlist, CapBranch, DiodeBranch, Netlist, NodeRef};

use crate::error::{Error, Result};

/// One point of the design space: the swept circuit parameters plus the
/// non-ideal component values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseParams {
    pub n_stages: u32,
    /// Peak AC input amplitude, volts.
    pub vin_peak: f64,
    /// Stage capacitance, farads (all 2N capacitors identical).
    pub cap: f64,
    /// Drive frequency, hertz.
    pub freq: f64,
    /// Load resistance, ohms.
    pub r_load: f64,
    /// Capacitor equivalent series resistance, ohms.
    pub esr: f64,
    /// Diode forward voltage drop, volts.
    pub diode_vf: f64,
    /// Diode conducting resistance, ohms.
    pub diode_ron: f64,
    /// Diode blocking conductance, siemens.
    pub diode_goff: f64,
}

/// Default ESR of each stage capacitor, ohms.
pub const DEFAULT_ESR_OHM: f64 = 0.5;
/// Default diode forward voltage, volts.
pub const DEFAULT_DIODE_VF_V: f64 = 0.7;
/// Default diode on-resistance, ohms.
pub const DEFAULT_DIODE_RON_OHM: f64 = 10.0;
/// Default diode off-conductance, siemens.
pub const DEFAULT_DIODE_GOFF_S: f64 = 1e-9;

impl CaseParams {
    /// Placeholder circuit values with the default parasitics filled in;
    /// callers overwrite the swept fields.
    pub fn default_parasitics() -> Self {
        Self {
            n_stages: 1,
            vin_peak: 1.0,
            cap: 1e-6,
            freq: 50.0,
            r_load: 1e6,
            esr: DEFAULT_ESR_OHM,
            diode_vf: DEFAULT_DIODE_VF_V,
            diode_ron: DEFAULT_DIODE_RON_OHM,
            diode_goff: DEFAULT_DIODE_GOFF_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stages < 1 || self.n_stages > 32 {
            return Err(Error::InvalidParameter(format!(
                "n_stages must be in [1, 32], got {}",
                self.n_stages
            )));
        }
        for (name, v) in [
            ("vin_peak", self.vin_peak),
            ("cap", self.cap),
            ("freq", self.freq),
            ("r_load", self.r_load),
            ("diode_ron", self.diode_ron),
            ("diode_goff", self.diode_goff),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.esr >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "esr must be >= 0 ohm, got {}",
                self.esr
            )));
        }
        if !(self.diode_vf >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diode_vf must be >= 0 V, got {}",
                self.diode_vf
            )));
        }
        Ok(())
    }
}

/// Solver settings. The defaults resolve the stiff charging transients of
/// the whole sweep grid; tests shrink them for speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub steps_per_cycle: usize,
    pub max_cycles: usize,
    /// Relative cycle-mean change below which a cycle counts as settled.
    pub settle_rel_tol: f64,
    /// Settled cycles required in a row before stopping.
    pub settle_consecutive: usize,
    /// Diode-state sweeps allowed per step.
    pub max_diode_iters: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps_per_cycle: 5_000,
            max_cycles: 2_000,
            settle_rel_tol: 1e-5,
            settle_consecutive: 3,
            max_diode_iters: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_cycle < 256 {
            return Err(Error::InvalidParameter(format!(
                "steps_per_cycle must be >= 256, got {}",
                self.steps_per_cycle
            )));
        }
        if self.max_cycles < 2 {
            return Err(Error::InvalidParameter(format!(
                "max_cycles must be >= 2, got {}",
                self.max_cycles
            )));
        }
        if !(self.settle_rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "settle_rel_tol must be > 0, got {}",
                self.settle_rel_tol
            )));
        }
        if self.settle_consecutive < 1 {
            return Err(Error::InvalidParameter(
                "settle_consecutive must be >= 1".into(),
            ));
        }
        if self.max_diode_iters < 1 {
            return Err(Error::InvalidParameter("max_diode_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One steady-state cycle of the output-node voltage.
#[derive(Debug, Clone)]
pub struct CycleWaveform {
    /// Output voltage samples over the final cycle; `samples[k]` is the
    /// value at `(k + 1) * dt` after the cycle start.
    pub samples: Vec<f64>,
    /// Step size, `1 / (freq * steps_per_cycle)` seconds.
    pub dt: f64,
    /// Cycle-mean output voltage of every cycle run, in order.
    pub v_dc_history: Vec<f64>,
    /// True if the settle criterion was met before `max_cycles`.
    pub converged: bool,
    /// Number of whole cycles integrated.
    pub cycles_run: usize,
    /// Steps on which the diode-state iteration hit its sweep limit.
    pub warning_steps: usize,
}

impl CycleWaveform {
    /// Mean of the final cycle.
    pub fn v_dc(&self) -> f64 {
        *self.v_dc_history.last().expect("waveform has at least one cycle")
    }
}

/// Run the multiplier to steady state and return the final cycle.
///
/// Convergence is declared once the relative change of the cycle-mean
/// output voltage, `|m_k - m_(k-1)| / max(|m_k|, 1 V)`, stays below
/// `settle_rel_tol` for `settle_consecutive` consecutive cycles. If
/// `max_cycles` elapses first the waveform is still returned with
/// `converged = false`.
pub fn simulate(params: &CaseParams, config: &SimConfig) -> Result<CycleWaveform> {
    params.validate()?;
    config.validate()?;

    let mut net = build_netlist(params)?;
    net.max_diode_iters = config.max_diode_iters;

    let spc = config.steps_per_cycle;
    let dt = 1.0 / (params.freq * spc as f64);
    let out = net.unknowns - 1;

    let mut samples = vec![0.0; spc];
    let mut v_dc_history = Vec::new();
    let mut warning_steps = 0usize;
    let mut settled_in_a_row = 0usize;
    let mut converged = false;
    let mut cycles_run = 0usize;

    for cycle in 0..config.max_cycles {
        for s in 0..spc {
            let t = (cycle * spc + s) as f64 * dt;
            let x = net.step(t, dt)?;
            if !net.last_step_diode_converged {
                warning_steps += 1;
            }
            samples[s] = x[out];
        }
        cycles_run = cycle + 1;
        let mean = samples.iter().sum::<f64>() / spc as f64;
        v_dc_history.push(mean);

        if cycle > 0 {
            let prev = v_dc_history[cycle - 1];
            let rel = (mean - prev).abs() / mean.abs().max(1.0);
            if rel < config.settle_rel_tol {
                settled_in_a_row += 1;
            } else {
                settled_in_a_row = 0;
            }
            if settled_in_a_row >= config.settle_consecutive {
                converged = true;
                break;
            }
        }
    }

    Ok(CycleWaveform {
        samples,
        dt,
        v_dc_history,
        converged,
        cycles_run,
        warning_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> SimConfig {
        SimConfig {
            steps_per_cycle: 1_024,
            max_cycles: 400,
            ..SimConfig::default()
        }
    }

    /// Near-ideal components: the no-load output must approach 2*N*Vin.
    fn ideal_params(n: u32, vin: f64, freq: f64) -> CaseParams {
        CaseParams {
            n_stages: n,
            vin_peak: vin,
            cap: 1e-6,
            freq,
            r_load: 1e12,
            esr: 1e-6,
            diode_vf: 0.0,
            diode_ron: 10.0,
            diode_goff: 1e-12,
        }
    }

    #[test]
    fn doubler_reaches_ideal_no_load_voltage() {
        let params = ideal_params(1, 100.0, 500.0);
        let config = SimConfig { max_cycles: 50, settle_consecutive: 1_000, ..quick_config() };
        let wave = simulate(&params, &config).unwrap();
        assert_eq!(wave.cycles_run, 50);
        let v_dc = wave.v_dc();
        let ideal = 2.0 * params.vin_peak;
        assert!(
            (v_dc - ideal).abs() / ideal < 0.01,
            "doubler no-load mean {v_dc} vs ideal {ideal}"
        );
    }

    #[test]
    fn four_stage_no_load_limit() {
        let params = ideal_params(4, 1_000.0, 500.0);
        let wave = simulate(&params, &quick_config()).unwrap();
        assert!(wave.converged, "no-load case should settle");
        let v_dc = wave.v_dc();
        let ideal = 8.0 * params.vin_peak;
        assert!(
            (v_dc - ideal).abs() / ideal < 0.01,
            "N=4 no-load mean {v_dc} vs ideal {ideal}"
        );
    }

    #[test]
    fn loaded_case_sits_below_ideal_and_ripples() {
        let params = CaseParams {
            n_stages: 2,
            vin_peak: 5_000.0,
            cap: 10e-6,
            freq: 500.0,
            r_load: 60e6,
            ..CaseParams::default_parasitics()
        };
        let wave = simulate(&params, &quick_config()).unwrap();
        assert!(wave.converged);
        let v_dc = wave.v_dc();
        let ideal = 2.0 * 2.0 * params.vin_peak;
        assert!(v_dc < ideal, "loaded output {v_dc} must sit below ideal {ideal}");
        assert!(v_dc > 0.5 * ideal, "output {v_dc} collapsed unexpectedly");

        let max = wave.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = wave.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max - min > 0.0, "finite load must produce nonzero ripple");
    }

    #[test]
    fn waveform_shape_fields_are_consistent() {
        let params = CaseParams {
            n_stages: 1,
            vin_peak: 100.0,
            cap: 1e-6,
            freq: 500.0,
            r_load: 1e6,
            ..CaseParams::default_parasitics()
        };
        let config = quick_config();
        let wave = simulate(&params, &config).unwrap();
        assert_eq!(wave.samples.len(), config.steps_per_cycle);
        assert_eq!(wave.dt, 1.0 / (params.freq * config.steps_per_cycle as f64));
        assert_eq!(wave.v_dc_history.len(), wave.cycles_run);
        assert!(wave.cycles_run <= config.max_cycles);
    }

    #[test]
    fn steady_state_balances_load_and_top_diode_charge() {
        let params = CaseParams {
            n_stages: 2,
            vin_peak: 1_000.0,
            cap: 5e-6,
            freq: 200.0,
            r_load: 2e6,
            ..CaseParams::default_parasitics()
        };
        let config = quick_config();
        let wave = simulate(&params, &config).unwrap();
        assert!(wave.converged);

        // Re-run the settled circuit one extra cycle, accumulating branch
        // currents directly from the netlist.
        let mut net = build_netlist(&params).unwrap();
        net.max_diode_iters = config.max_diode_iters;
        let spc = config.steps_per_cycle;
        let dt = 1.0 / (params.freq * spc as f64);
        let total_steps = wave.cycles_run * spc;
        for k in 0..total_steps {
            net.step(k as f64 * dt, dt).unwrap();
        }
        let top = net.diode_branches.len() - 1;
        let mut mean_load = 0.0;
        let mut mean_diode = 0.0;
        for k in 0..spc {
            net.step((total_steps + k) as f64 * dt, dt).unwrap();
            mean_load += net.load_current();
            mean_diode += net.diode_current(top);
        }
        mean_load /= spc as f64;
        mean_diode /= spc as f64;
        let rel = (mean_load - mean_diode).abs() / mean_load.abs();
        assert!(
            rel < 0.02,
            "charge balance off: load {mean_load:.6e} A vs top diode {mean_diode:.6e} A ({rel:.3})"
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let params = CaseParams::default_parasitics();
        let bad_steps = SimConfig { steps_per_cycle: 100, ..SimConfig::default() };
        assert!(simulate(&params, &bad_steps).is_err());
        let bad_cycles = SimConfig { max_cycles: 1, ..SimConfig::default() };
        assert!(simulate(&params, &bad_cycles).is_err());
        let bad_n = CaseParams { n_stages: 0, ..params };
        assert!(simulate(&bad_n, &SimConfig::default()).is_err());
        let bad_n_hi = CaseParams { n_stages: 33, ..params };
        assert!(simulate(&bad_n_hi, &SimConfig::default()).is_err());
    }
}
