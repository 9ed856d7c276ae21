//! Parametric sweep dataset: generation, persistence and splits.
//!
//! The design space is a full Cartesian grid over stage count, input
//! voltage, capacitance, frequency and load. Every grid point is simulated
//! to steady state, reduced to ripple features, and joined with the
//! classical references into one [`CaseRecord`] row; the default grid
//! yields 324 rows. The regression target of every row is the residual
//! between simulated and classical peak-to-peak ripple.

mod csvio;
mod matrix;

pub use csvio::{read_csv, write_csv, write_csv_to, DATASET_COLUMNS, SCHEMA_COMMENT};
pub use matrix::{build_feature_matrix, build_feature_matrix_with_mode, FeatureMatrix, FeatureMode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{simulate, CaseParams, SimConfig};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::rng::SplitMix64;
use crate::theory;

/// Sweep axes in engineering units (the CLI/file boundary). SI conversion
/// happens when grid points become [`CaseParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub stages: Vec<u32>,
    pub vin_kv: Vec<f64>,
    pub cap_uf: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub rload_mohm: Vec<f64>,
}

impl Default for SweepGrid {
    /// The canonical 324-case grid: 4 stage counts x 3 voltages x
    /// 3 capacitances x 3 frequencies x 3 loads.
    fn default() -> Self {
        Self {
            stages: vec![2, 4, 6, 8],
            vin_kv: vec![5.0, 15.0, 25.0],
            cap_uf: vec![1.0, 5.0, 10.0],
            freq_hz: vec![50.0, 100.0, 500.0],
            rload_mohm: vec![6.0, 12.0, 60.0],
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        fn check_f64(name: &str, xs: &[f64]) -> Result<()> {
            if xs.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} must be nonempty")));
            }
            for w in xs.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be strictly increasing, got {xs:?}"
                    )));
                }
            }
            if !(xs[0] > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
            Ok(())
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidParameter("stages must be nonempty".into()));
        }
        for w in self.stages.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidParameter(format!(
                    "stages must be strictly increasing, got {:?}",
                    self.stages
                )));
            }
        }
        if self.stages[0] < 1 {
            return Err(Error::InvalidParameter("stages must be positive".into()));
        }
        check_f64("vin_kv", &self.vin_kv)?;
        check_f64("cap_uf", &self.cap_uf)?;
        check_f64("freq_hz", &self.freq_hz)?;
        check_f64("rload_mohm", &self.rload_mohm)?;
        Ok(())
    }

    pub fn case_count(&self) -> usize {
        self.stages.len()
            * self.vin_kv.len()
            * self.cap_uf.len()
            * self.freq_hz.len()
            * self.rload_mohm.len()
    }
}

/// Non-ideal component values shared by every case of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonIdealDefaults {
    pub esr: f64,
    pub diode_vf: f64,
    pub diode_ron: f64,
    pub diode_goff: f64,
}

impl Default for NonIdealDefaults {
    fn default() -> Self {
        Self {
            esr: crate::circuit::DEFAULT_ESR_OHM,
            diode_vf: crate::circuit::DEFAULT_DIODE_VF_V,
            diode_ron: crate::circuit::DEFAULT_DIODE_RON_OHM,
            diode_goff: crate::circuit::DEFAULT_DIODE_GOFF_S,
        }
    }
}

/// One dataset row: the 17 features plus identity and convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: u32,
    pub n_stages: u32,
    pub vin_peak_v: f64,
    pub cap_f: f64,
    pub freq_hz: f64,
    pub rload_ohm: f64,
    pub vdc_v: f64,
    pub vpp_sim_v: f64,
    pub vrms_sim_v: f64,
    pub std_v: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub crest_factor: f64,
    pub i_load_a: f64,
    pub vpp_theory_v: f64,
    pub ripple_factor_theory: f64,
    pub ripple_factor_sim: f64,
    /// Regression target, `vpp_sim_v - vpp_theory_v`.
    pub residual_v: f64,
    pub converged: bool,
}

impl CaseRecord {
    /// True when the simulation failed outright and the row carries the
    /// NaN sentinel instead of measurements.
    pub fn is_failed(&self) -> bool {
        self.vdc_v.is_nan()
    }

    /// Circuit parameters of this row.
    pub fn params(&self, defaults: &NonIdealDefaults) -> CaseParams {
        CaseParams {
            n_stages: self.n_stages,
            vin_peak: self.vin_peak_v,
            cap: self.cap_f,
            freq: self.freq_hz,
            r_load: self.rload_ohm,
            esr: defaults.esr,
            diode_vf: defaults.diode_vf,
            diode_ron: defaults.diode_ron,
            diode_goff: defaults.diode_goff,
        }
    }
}

/// Enumerate the Cartesian product in the fixed nested order: stages
/// outermost, then input voltage, capacitance, frequency, load. Case ids
/// are the enumeration index starting at 0.
pub fn enumerate_cases(grid: &SweepGrid) -> Result<Vec<CaseParams>> {
    enumerate_cases_with(grid, &NonIdealDefaults::default())
}

pub fn enumerate_cases_with(grid: &SweepGrid, defaults: &NonIdealDefaults) -> Result<Vec<CaseParams>> {
    grid.validate()?;
    let mut cases = Vec::with_capacity(grid.case_count());
    for &n in &grid.stages {
        for &vin_kv in &grid.vin_kv {
            for &cap_uf in &grid.cap_uf {
                for &freq in &grid.freq_hz {
                    for &rload_mohm in &grid.rload_mohm {
                        cases.push(CaseParams {
                            n_stages: n,
                            vin_peak: vin_kv * 1e3,
                            cap: cap_uf * 1e-6,
                            freq,
                            r_load: rload_mohm * 1e6,
                            esr: defaults.esr,
                            diode_vf: defaults.diode_vf,
                            diode_ron: defaults.diode_ron,
                            diode_goff: defaults.diode_goff,
                        });
                    }
                }
            }
        }
    }
    Ok(cases)
}

/// Simulate every case of the grid and assemble the dataset rows.
///
/// Cases run in parallel on a pool of `workers` threads (0 = available
/// parallelism); the output order and every value are independent of the
/// worker count. A case whose simulation errors is kept as a NaN-sentinel
/// row instead of aborting the sweep.
pub fn run_sweep(grid: &SweepGrid, sim_config: &SimConfig, workers: usize) -> Result<Vec<CaseRecord>> {
    run_sweep_with(grid, sim_config, &NonIdealDefaults::default(), workers)
}

pub fn run_sweep_with(
    grid: &SweepGrid,
    sim_config: &SimConfig,
    defaults: &NonIdealDefaults,
    workers: usize,
) -> Result<Vec<CaseRecord>> {
    sim_config.validate()?;
    let cases = enumerate_cases_with(grid, defaults)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let records = pool.install(|| {
        cases
            .par_iter()
            .enumerate()
            .map(|(id, params)| simulate_case(id as u32, params, sim_config))
            .collect()
    });
    Ok(records)
}

/// Simulate one case and build its row; never fails, errors become the NaN
/// sentinel.
pub fn simulate_case(case_id: u32, params: &CaseParams, sim_config: &SimConfig) -> CaseRecord {
    match try_simulate_case(case_id, params, sim_config) {
        Ok(record) => record,
        Err(_) => failed_record(case_id, params),
    }
}

fn try_simulate_case(case_id: u32, params: &CaseParams, sim_config: &SimConfig) -> Result<CaseRecord> {
    let wave = simulate(params, sim_config)?;
    let f = extract_features(&wave)?;

    let i_load = theory::load_current(f.v_dc, params.r_load)?;
    let inputs = theory::TheoryInputs::new(
        params.n_stages,
        params.vin_peak,
        params.freq,
        params.cap,
        i_load,
    )?;
    let vpp_theory = theory::theoretical_ripple_pp(&inputs)?;
    let rf_theory = theory::ripple_factor(theory::sawtooth_rms_from_pp(vpp_theory), f.v_dc)?;
    let rf_sim = theory::ripple_factor(f.v_rms, f.v_dc)?;

    Ok(CaseRecord {
        case_id,
        n_stages: params.n_stages,
        vin_peak_v: params.vin_peak,
        cap_f: params.cap,
        freq_hz: params.freq,
        rload_ohm: params.r_load,
        vdc_v: f.v_dc,
        vpp_sim_v: f.v_pp,
        vrms_sim_v: f.v_rms,
        std_v: f.std_dev,
        skewness: f.skewness,
        kurtosis: f.kurtosis,
        crest_factor: f.crest_factor,
        i_load_a: i_load,
        vpp_theory_v: vpp_theory,
        ripple_factor_theory: rf_theory,
        ripple_factor_sim: rf_sim,
        residual_v: f.v_pp - vpp_theory,
        converged: wave.converged,
    })
}

fn failed_record(case_id: u32, params: &CaseParams) -> CaseRecord {
    CaseRecord {
        case_id,
        n_stages: params.n_stages,
        vin_peak_v: params.vin_peak,
        cap_f: params.cap,
        freq_hz: params.freq,
        rload_ohm: params.r_load,
        vdc_v: f64::NAN,
        vpp_sim_v: f64::NAN,
        vrms_sim_v: f64::NAN,
        std_v: f64::NAN,
        skewness: f64::NAN,
        kurtosis: f64::NAN,
        crest_factor: f64::NAN,
        i_load_a: f64::NAN,
        vpp_theory_v: f64::NAN,
        ripple_factor_theory: f64::NAN,
        ripple_factor_sim: f64::NAN,
        residual_v: f64::NAN,
        converged: false,
    }
}

/// Stratified train/test split keyed on the stage count.
///
/// Within every stage group the records are shuffled by a seeded
/// deterministic generator and the first `floor(train_frac * len)` go to
/// the training set (clamped so both partitions stay nonempty). Both
/// partitions come back in case-id order.
pub fn split(
    records: &[CaseRecord],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<CaseRecord>, Vec<CaseRecord>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    if records.is_empty() {
        return Err(Error::Empty("split needs at least one record".into()));
    }

    let mut strata: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, r) in records.iter().enumerate() {
        strata.entry(r.n_stages).or_default().push(i);
    }
    for (stage, members) in &strata {
        if members.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "stratum n_stages={stage} has {} record(s); need at least 2",
                members.len()
            )));
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (_, mut members) in strata {
        rng.shuffle(&mut members);
        let n = members.len();
        let n_train = ((train_frac * n as f64).floor() as usize).clamp(1, n - 1);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(&train_idx), pick(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> SweepGrid {
        SweepGrid {
            stages: vec![1, 2],
            vin_kv: vec![0.1],
            cap_uf: vec![10.0],
            freq_hz: vec![500.0],
            rload_mohm: vec![1.0],
        }
    }

    fn quick_sim() -> SimConfig {
        SimConfig { steps_per_cycle: 512, max_cycles: 300, ..SimConfig::default() }
    }

    #[test]
    fn default_grid_has_canonical_counts() {
        let grid = SweepGrid::default();
        assert_eq!(grid.case_count(), 324);
        let cases = enumerate_cases(&grid).unwrap();
        assert_eq!(cases.len(), 324);

        // Nested order: stages outermost, load innermost.
        assert_eq!(cases[0].n_stages, 2);
        assert_eq!(cases[0].vin_peak, 5_000.0);
        assert_eq!(cases[0].cap, 1e-6);
        assert_eq!(cases[0].freq, 50.0);
        assert_eq!(cases[0].r_load, 6e6);
        assert_eq!(cases[1].r_load, 12e6);
        assert_eq!(cases[3].freq, 100.0);
        assert_eq!(cases[323].n_stages, 8);
        assert_eq!(cases[323].r_load, 60e6);
    }

    #[test]
    fn singleton_and_partial_grids_count_correctly() {
        let single = SweepGrid {
            stages: vec![4],
            vin_kv: vec![15.0],
            cap_uf: vec![5.0],
            freq_hz: vec![100.0],
            rload_mohm: vec![12.0],
        };
        assert_eq!(enumerate_cases(&single).unwrap().len(), 1);

        let two_stage = SweepGrid { stages: vec![2, 4], ..SweepGrid::default() };
        assert_eq!(enumerate_cases(&two_stage).unwrap().len(), 162);
    }

    #[test]
    fn grid_validation_rejects_disorder() {
        let bad = SweepGrid { stages: vec![4, 2], ..SweepGrid::default() };
        assert!(enumerate_cases(&bad).is_err());
        let empty = SweepGrid { freq_hz: vec![], ..SweepGrid::default() };
        assert!(enumerate_cases(&empty).is_err());
        let negative = SweepGrid { vin_kv: vec![-5.0, 5.0], ..SweepGrid::default() };
        assert!(enumerate_cases(&negative).is_err());
    }

    #[test]
    fn sweep_rows_satisfy_the_residual_identity() {
        let records = run_sweep(&tiny_grid(), &quick_sim(), 1).unwrap();
        assert_eq!(records.len(), 2);
        for r in &records {
            assert!(!r.is_failed());
            assert_eq!(r.residual_v, r.vpp_sim_v - r.vpp_theory_v);
            assert_eq!(r.i_load_a, r.vdc_v / r.rload_ohm);
            assert_eq!(r.ripple_factor_sim, r.vrms_sim_v / r.vdc_v);
        }
    }

    #[test]
    fn sweep_is_worker_count_independent() {
        let a = run_sweep(&tiny_grid(), &quick_sim(), 1).unwrap();
        let b = run_sweep(&tiny_grid(), &quick_sim(), 4).unwrap();
        assert_eq!(a, b);
    }

    fn synthetic_records(per_stage: usize, stages: &[u32]) -> Vec<CaseRecord> {
        let mut id = 0;
        let mut out = Vec::new();
        for &n in stages {
            for _ in 0..per_stage {
                out.push(CaseRecord {
                    case_id: id,
                    n_stages: n,
                    vin_peak_v: 5e3,
                    cap_f: 1e-6,
                    freq_hz: 50.0,
                    rload_ohm: 6e6,
                    vdc_v: 1.0,
                    vpp_sim_v: 2.0,
                    vrms_sim_v: 0.5,
                    std_v: 0.5,
                    skewness: 0.0,
                    kurtosis: 1.5,
                    crest_factor: 1.4,
                    i_load_a: 1.0 / 6e6,
                    vpp_theory_v: 1.5,
                    ripple_factor_theory: 0.4,
                    ripple_factor_sim: 0.5,
                    residual_v: 0.5,
                    converged: true,
                });
                id += 1;
            }
        }
        out
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let records = synthetic_records(81, &[2, 4, 6, 8]);
        let (train, test) = split(&records, 0.8, 7).unwrap();
        assert_eq!(train.len(), 256); // 4 strata of 81 -> 64 train each
        assert_eq!(test.len(), 68);
        for &stage in &[2u32, 4, 6, 8] {
            assert_eq!(train.iter().filter(|r| r.n_stages == stage).count(), 64);
            assert_eq!(test.iter().filter(|r| r.n_stages == stage).count(), 17);
        }

        // Disjoint cover.
        let mut ids: Vec<u32> = train.iter().chain(test.iter()).map(|r| r.case_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..324).collect::<Vec<_>>());

        // Same seed, same partition; different seed, different partition of
        // the same shape.
        let (train2, _) = split(&records, 0.8, 7).unwrap();
        assert_eq!(train, train2);
        let (train3, test3) = split(&records, 0.8, 8).unwrap();
        assert_eq!(train3.len(), 256);
        assert_eq!(test3.len(), 68);
        assert_ne!(
            train3.iter().map(|r| r.case_id).collect::<Vec<_>>(),
            train.iter().map(|r| r.case_id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn split_rejects_undersized_strata() {
        let records = synthetic_records(1, &[2, 4]);
        assert!(split(&records, 0.8, 0).is_err());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let records = synthetic_records(4, &[2]);
        assert!(split(&records, 0.0, 0).is_err());
        assert!(split(&records, 1.0, 0).is_err());
    }
}
