//! Engineered feature matrix for the residual regressor.
//!
//! Raw numerics are joined by two physics-informed columns taken straight
//! from the classical ripple model, `N^2/(f*C)` and `I_L/(f*C)`, and the
//! discrete axes (stage count, input voltage level) become one-hot columns
//! so the trees treat them as categories rather than magnitudes.
//!
//! The full feature set includes the waveform statistics, which exist only
//! after a simulation; a params-only mode drops them (and derives the load
//! current from the ideal no-load output) so a corrector can be trained
//! that needs nothing but the design parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory;

use super::CaseRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Circuit parameters, waveform statistics, physics columns, one-hots.
    Full,
    /// Circuit parameters, physics columns and one-hots only; usable
    /// without a simulated waveform.
    ParamsOnly,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureMode::Full => write!(f, "full"),
            FeatureMode::ParamsOnly => write!(f, "params-only"),
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FeatureMode::Full),
            "params-only" => Ok(FeatureMode::ParamsOnly),
            other => Err(Error::InvalidParameter(format!(
                "unknown feature mode {other:?}; expected \"full\" or \"params-only\""
            ))),
        }
    }
}

/// Row-major numeric matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub mode: FeatureMode,
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(feature_names: Vec<String>, mode: FeatureMode, rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = feature_names.len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::ShapeMismatch(format!(
                    "row has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { feature_names, mode, n_rows: rows.len(), n_cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            feature_names: self.feature_names.clone(),
            mode: self.mode,
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Raw values in row-major order (fingerprinting).
    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

fn vin_column_name(vin_peak_v: f64) -> String {
    let kv = vin_peak_v / 1e3;
    if vin_peak_v >= 1e3 && kv.fract() == 0.0 {
        format!("vin_{kv}k")
    } else {
        format!("vin_{vin_peak_v}")
    }
}

/// Build the full-mode matrix; the regression target is `residual_v`.
pub fn build_feature_matrix(records: &[CaseRecord]) -> Result<FeatureMatrix> {
    build_feature_matrix_with_mode(records, FeatureMode::Full)
}

pub fn build_feature_matrix_with_mode(
    records: &[CaseRecord],
    mode: FeatureMode,
) -> Result<FeatureMatrix> {
    if records.is_empty() {
        return Err(Error::Empty("feature matrix needs at least one record".into()));
    }

    let mut stage_levels: Vec<u32> = records.iter().map(|r| r.n_stages).collect();
    stage_levels.sort_unstable();
    stage_levels.dedup();
    let mut vin_levels: Vec<f64> = records.iter().map(|r| r.vin_peak_v).collect();
    vin_levels.sort_by(|a, b| a.partial_cmp(b).expect("vin levels are finite"));
    vin_levels.dedup();

    let mut names: Vec<String> = vec!["cap_f".into(), "freq_hz".into(), "rload_ohm".into()];
    if mode == FeatureMode::Full {
        names.extend([
            "std_v".into(),
            "skewness".into(),
            "kurtosis".into(),
            "crest_factor".into(),
        ]);
    }
    names.push("n2_over_fc".into());
    names.push("il_over_fc".into());
    for &s in &stage_levels {
        names.push(format!("stage_{s}"));
    }
    for &v in &vin_levels {
        names.push(vin_column_name(v));
    }

    let n_cols = names.len();
    let mut data = Vec::with_capacity(records.len() * n_cols);
    for r in records {
        let fc = r.freq_hz * r.cap_f;
        let n = f64::from(r.n_stages);
        let n2_over_fc = n * n / fc;
        let i_load = match mode {
            FeatureMode::Full => r.i_load_a,
            FeatureMode::ParamsOnly => {
                theory::ideal_output_voltage(r.n_stages, r.vin_peak_v)? / r.rload_ohm
            }
        };
        let il_over_fc = i_load / fc;

        let mut row: Vec<f64> = vec![r.cap_f, r.freq_hz, r.rload_ohm];
        if mode == FeatureMode::Full {
            row.extend([r.std_v, r.skewness, r.kurtosis, r.crest_factor]);
        }
        row.push(n2_over_fc);
        row.push(il_over_fc);
        for &s in &stage_levels {
            row.push(if r.n_stages == s { 1.0 } else { 0.0 });
        }
        for &v in &vin_levels {
            row.push(if r.vin_peak_v == v { 1.0 } else { 0.0 });
        }

        for &value in &row {
            if !value.is_finite() {
                return Err(Error::NonFinite { context: "feature matrix", case_id: r.case_id });
            }
        }
        if !(n2_over_fc > 0.0) || !(il_over_fc > 0.0) {
            return Err(Error::NonFinite {
                context: "feature matrix physics column (must be positive)",
                case_id: r.case_id,
            });
        }
        data.extend_from_slice(&row);
    }

    Ok(FeatureMatrix {
        feature_names: names,
        mode,
        n_rows: records.len(),
        n_cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(case_id: u32, n: u32, vin: f64) -> CaseRecord {
        CaseRecord {
            case_id,
            n_stages: n,
            vin_peak_v: vin,
            cap_f: 1e-6,
            freq_hz: 50.0,
            rload_ohm: 6e6,
            vdc_v: 30_000.0,
            vpp_sim_v: 500.0,
            vrms_sim_v: 150.0,
            std_v: 150.0,
            skewness: -0.3,
            kurtosis: 2.1,
            crest_factor: 1.7,
            i_load_a: 30_000.0 / 6e6,
            vpp_theory_v: 300.0,
            ripple_factor_theory: 0.003,
            ripple_factor_sim: 0.005,
            residual_v: 200.0,
            converged: true,
        }
    }

    #[test]
    fn physics_columns_match_hand_arithmetic() {
        let mut r = record(0, 6, 5_000.0);
        r.freq_hz = 50.0;
        r.cap_f = 1e-6;
        let m = build_feature_matrix(&[r]).unwrap();
        let c = m.column_index("n2_over_fc").unwrap();
        assert!((m.get(0, c) - 720_000.0).abs() < 1e-6);

        let mut r2 = record(0, 4, 15_000.0);
        r2.vdc_v = 30_000.0;
        r2.rload_ohm = 6e6;
        r2.i_load_a = 0.005;
        r2.freq_hz = 100.0;
        r2.cap_f = 5e-6;
        let m2 = build_feature_matrix(&[r2]).unwrap();
        let c2 = m2.column_index("il_over_fc").unwrap();
        assert!((m2.get(0, c2) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_columns_are_exclusive() {
        let records = vec![
            record(0, 2, 5_000.0),
            record(1, 4, 15_000.0),
            record(2, 6, 25_000.0),
            record(3, 8, 5_000.0),
        ];
        let m = build_feature_matrix(&records).unwrap();
        for name in ["stage_2", "stage_4", "stage_6", "stage_8", "vin_5k", "vin_15k", "vin_25k"] {
            assert!(m.column_index(name).is_some(), "missing column {name}");
        }
        let stage4 = m.column_index("stage_4").unwrap();
        assert_eq!(m.get(1, stage4), 1.0);
        assert_eq!(m.get(0, stage4), 0.0);

        for row in 0..m.n_rows {
            let stage_sum: f64 = ["stage_2", "stage_4", "stage_6", "stage_8"]
                .iter()
                .map(|n| m.get(row, m.column_index(n).unwrap()))
                .sum();
            let vin_sum: f64 = ["vin_5k", "vin_15k", "vin_25k"]
                .iter()
                .map(|n| m.get(row, m.column_index(n).unwrap()))
                .sum();
            assert_eq!(stage_sum, 1.0);
            assert_eq!(vin_sum, 1.0);
        }
    }

    #[test]
    fn params_only_mode_drops_waveform_statistics() {
        let records = vec![record(0, 2, 5_000.0), record(1, 4, 15_000.0)];
        let m = build_feature_matrix_with_mode(&records, FeatureMode::ParamsOnly).unwrap();
        assert!(m.column_index("std_v").is_none());
        assert!(m.column_index("skewness").is_none());
        // Load current derives from the ideal output in this mode.
        let il = m.column_index("il_over_fc").unwrap();
        let expect = 2.0 * 2.0 * 5_000.0 / 6e6 / (50.0 * 1e-6);
        assert!((m.get(0, il) - expect).abs() < 1e-9);
    }

    #[test]
    fn non_finite_features_name_the_case() {
        let mut bad = record(3, 2, 5_000.0);
        bad.kurtosis = f64::NAN;
        match build_feature_matrix(&[bad]) {
            Err(Error::NonFinite { case_id, .. }) => assert_eq!(case_id, 3),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn select_rows_keeps_names_and_order() {
        let records = vec![record(0, 2, 5_000.0), record(1, 4, 15_000.0), record(2, 6, 25_000.0)];
        let m = build_feature_matrix(&records).unwrap();
        let sub = m.select_rows(&[2, 0]);
        assert_eq!(sub.n_rows, 2);
        assert_eq!(sub.feature_names, m.feature_names);
        assert_eq!(sub.row(0), m.row(2));
        assert_eq!(sub.row(1), m.row(0));
    }
}
