//! Residual learning and regime-wise evaluation.
//!
//! The corrected estimator never predicts ripple directly. It predicts the
//! residual between simulated and classical peak-to-peak ripple, then adds
//! that residual back onto the classical value. The decomposition keeps the
//! interpretable baseline in charge and confines the learned part to the
//! systematic error of the theory.
//!
//! Errors are reported globally and on the canonical operating regimes
//! where classical theory is known to degrade: many stages, low frequency,
//! heavy load, and their conjunction.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_feature_matrix_with_mode, split, CaseRecord, FeatureMatrix, FeatureMode,
};
use crate::error::{Error, Result};
use crate::forest::{self, fit, CvEntry, ForestHyperparams, ForestModel};

/// Stage count at and above which a case is "high stage".
pub const HIGH_STAGE_MIN: u32 = 6;
/// Frequency at and below which a case is "low frequency", hertz.
pub const LOW_FREQ_MAX_HZ: f64 = 100.0;
/// Load resistance at and below which a case is "heavy load", ohms.
/// Lower resistance means higher load current.
pub const HEAVY_LOAD_MAX_OHM: f64 = 12e6;

/// Named subsets of the design space used for stratified error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    HighStage,
    LowFrequency,
    HeavyLoad,
    /// Conjunction of the other three.
    Critical,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::HighStage,
        Regime::LowFrequency,
        Regime::HeavyLoad,
        Regime::Critical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::HighStage => "high_stage",
            Regime::LowFrequency => "low_frequency",
            Regime::HeavyLoad => "heavy_load",
            Regime::Critical => "critical",
        }
    }

    pub fn matches(&self, record: &CaseRecord) -> bool {
        match self {
            Regime::HighStage => record.n_stages >= HIGH_STAGE_MIN,
            Regime::LowFrequency => record.freq_hz <= LOW_FREQ_MAX_HZ,
            Regime::HeavyLoad => record.rload_ohm <= HEAVY_LOAD_MAX_OHM,
            Regime::Critical => {
                Regime::HighStage.matches(record)
                    && Regime::LowFrequency.matches(record)
                    && Regime::HeavyLoad.matches(record)
            }
        }
    }
}

/// Standard error metrics of a prediction vector against its targets.
/// The sign convention is `error = prediction - target`, so a model that
/// underestimates carries a negative bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub bias: f64,
    pub r2: f64,
    pub n_cases: usize,
}

/// Compute RMSE, MAE, bias and R-squared.
pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<MetricSet> {
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("metrics need at least one case".into()));
    }
    let n = predictions.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut sum = 0.0;
    for (&p, &t) in predictions.iter().zip(targets) {
        let e = p - t;
        sq += e * e;
        abs += e.abs();
        sum += e;
    }
    let target_mean = targets.iter().sum::<f64>() / n;
    let sst: f64 = targets.iter().map(|t| (t - target_mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateInput(
            "R^2 is undefined for zero-variance targets".into(),
        ));
    }
    Ok(MetricSet {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        bias: sum / n,
        r2: 1.0 - sq / sst,
        n_cases: predictions.len(),
    })
}

/// Residual targets, simulation minus theory, per record.
pub fn residual_targets(records: &[CaseRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            if !r.vpp_sim_v.is_finite() || !r.vpp_theory_v.is_finite() {
                Err(Error::NonFinite { context: "residual target", case_id: r.case_id })
            } else {
                Ok(r.vpp_sim_v - r.vpp_theory_v)
            }
        })
        .collect()
}

/// Corrected ripple: classical value plus predicted residual, clamped at
/// zero (ripple is non-negative). Returns the corrected vector and the
/// indices of the rows that were clamped.
pub fn corrected_prediction(
    theory_vpp: &[f64],
    predicted_residual: &[f64],
) -> Result<(Vec<f64>, Vec<usize>)> {
    if theory_vpp.len() != predicted_residual.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} theory values vs {} residuals",
            theory_vpp.len(),
            predicted_residual.len()
        )));
    }
    let mut clamped = Vec::new();
    let corrected = theory_vpp
        .iter()
        .zip(predicted_residual)
        .enumerate()
        .map(|(i, (&t, &r))| {
            let v = t + r;
            if v < 0.0 {
                clamped.push(i);
                0.0
            } else {
                v
            }
        })
        .collect();
    Ok((corrected, clamped))
}

/// Theory-vs-corrected metrics on one named subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: String,
    pub n_cases: usize,
    pub theory: MetricSet,
    pub corrected: MetricSet,
    /// `100 * (1 - rmse_corrected / rmse_theory)`.
    pub rmse_reduction_pct: f64,
}

/// Full evaluation: a global row followed by the four canonical regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// What the report was computed on, e.g. "test split" or "full dataset".
    pub scope: String,
    pub rows: Vec<RegimeRow>,
}

/// Evaluate theory and corrected predictions per regime. All three slices
/// are aligned with `records`; targets are the simulated peak-to-peak
/// ripple values.
pub fn evaluate_regimes(
    records: &[CaseRecord],
    theory_preds: &[f64],
    corrected_preds: &[f64],
    scope: &str,
) -> Result<RegimeReport> {
    if records.len() != theory_preds.len() || records.len() != corrected_preds.len() {
        return Err(Error::ShapeMismatch(format!(
            "records/theory/corrected lengths differ: {}/{}/{}",
            records.len(),
            theory_preds.len(),
            corrected_preds.len()
        )));
    }
    let targets: Vec<f64> = records.iter().map(|r| r.vpp_sim_v).collect();

    let row_for = |name: &str, idx: &[usize]| -> Result<RegimeRow> {
        if idx.is_empty() {
            return Err(Error::Empty(format!("regime {name} matches no cases")));
        }
        let pick = |xs: &[f64]| -> Vec<f64> { idx.iter().map(|&i| xs[i]).collect() };
        let theory = metrics(&pick(theory_preds), &pick(&targets))?;
        let corrected = metrics(&pick(corrected_preds), &pick(&targets))?;
        Ok(RegimeRow {
            regime: name.to_string(),
            n_cases: idx.len(),
            rmse_reduction_pct: 100.0 * (1.0 - corrected.rmse / theory.rmse),
            theory,
            corrected,
        })
    };

    let mut rows = Vec::with_capacity(5);
    let all: Vec<usize> = (0..records.len()).collect();
    rows.push(row_for("global", &all)?);
    for regime in Regime::ALL {
        let idx: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| regime.matches(r))
            .map(|(i, _)| i)
            .collect();
        rows.push(row_for(regime.name(), &idx)?);
    }
    Ok(RegimeReport { scope: scope.to_string(), rows })
}

impl RegimeReport {
    /// Aligned text table, regimes as columns.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Regime-wise error statistics ({})\n", self.scope));
        let headers: Vec<&str> = self.rows.iter().map(|r| r.regime.as_str()).collect();
        let metric_rows: Vec<(&str, Vec<String>)> = vec![
            ("Cases", self.rows.iter().map(|r| r.n_cases.to_string()).collect()),
            ("RMSE theory (V)", self.rows.iter().map(|r| format!("{:.2}", r.theory.rmse)).collect()),
            ("RMSE corrected (V)", self.rows.iter().map(|r| format!("{:.2}", r.corrected.rmse)).collect()),
            ("MAE theory (V)", self.rows.iter().map(|r| format!("{:.2}", r.theory.mae)).collect()),
            ("MAE corrected (V)", self.rows.iter().map(|r| format!("{:.2}", r.corrected.mae)).collect()),
            ("Bias theory (V)", self.rows.iter().map(|r| format!("{:.2}", r.theory.bias)).collect()),
            ("Bias corrected (V)", self.rows.iter().map(|r| format!("{:.2}", r.corrected.bias)).collect()),
            ("R2 theory", self.rows.iter().map(|r| format!("{:.4}", r.theory.r2)).collect()),
            ("R2 corrected", self.rows.iter().map(|r| format!("{:.4}", r.corrected.r2)).collect()),
            ("RMSE reduction (%)", self.rows.iter().map(|r| format!("{:.1}", r.rmse_reduction_pct)).collect()),
        ];

        let label_w = metric_rows.iter().map(|(n, _)| n.len()).max().unwrap();
        let col_w: Vec<usize> = headers
            .iter()
            .enumerate()
            .map(|(c, h)| {
                metric_rows
                    .iter()
                    .map(|(_, vals)| vals[c].len())
                    .chain(std::iter::once(h.len()))
                    .max()
                    .unwrap()
            })
            .collect();

        out.push_str(&format!("{:label_w$}", ""));
        for (c, h) in headers.iter().enumerate() {
            out.push_str(&format!("  {:>w$}", h, w = col_w[c]));
        }
        out.push('\n');
        for (name, vals) in &metric_rows {
            out.push_str(&format!("{name:label_w$}"));
            for (c, v) in vals.iter().enumerate() {
                out.push_str(&format!("  {:>w$}", v, w = col_w[c]));
            }
            out.push('\n');
        }
        out
    }

    /// CSV form, one row per regime.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "regime,n_cases,rmse_theory_v,rmse_corrected_v,mae_theory_v,mae_corrected_v,\
             bias_theory_v,bias_corrected_v,r2_theory,r2_corrected,rmse_reduction_pct\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.regime,
                r.n_cases,
                r.theory.rmse,
                r.corrected.rmse,
                r.theory.mae,
                r.corrected.mae,
                r.theory.bias,
                r.corrected.bias,
                r.theory.r2,
                r.corrected.r2,
                r.rmse_reduction_pct
            ));
        }
        out
    }
}

/// One row of the residual-versus-frequency export.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResidualRow {
    pub freq_hz: f64,
    pub mean_abs_residual_v: f64,
    pub max_abs_residual_v: f64,
    pub n_cases: usize,
}

/// Aggregate |residual| per frequency, ascending. Rows with a non-finite
/// residual (failed cases) are skipped; an empty input yields an empty
/// table.
pub fn export_residual_vs_frequency(records: &[CaseRecord]) -> Vec<FrequencyResidualRow> {
    let mut by_freq: std::collections::BTreeMap<u64, (f64, f64, usize)> = Default::default();
    for r in records {
        if !r.residual_v.is_finite() {
            continue;
        }
        let key = r.freq_hz.to_bits();
        let entry = by_freq.entry(key).or_insert((0.0, 0.0, 0));
        entry.0 += r.residual_v.abs();
        entry.1 = entry.1.max(r.residual_v.abs());
        entry.2 += 1;
    }
    let mut rows: Vec<FrequencyResidualRow> = by_freq
        .into_iter()
        .map(|(bits, (sum, max, n))| FrequencyResidualRow {
            freq_hz: f64::from_bits(bits),
            mean_abs_residual_v: sum / n as f64,
            max_abs_residual_v: max,
            n_cases: n,
        })
        .collect();
    rows.sort_by(|a, b| a.freq_hz.partial_cmp(&b.freq_hz).unwrap());
    rows
}

/// CSV form of the residual-versus-frequency table.
pub fn residual_vs_frequency_csv(rows: &[FrequencyResidualRow]) -> String {
    let mut out = String::from("freq_hz,mean_abs_residual_v,max_abs_residual_v,n_cases\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            r.freq_hz, r.mean_abs_residual_v, r.max_abs_residual_v, r.n_cases
        ));
    }
    out
}

/// Settings of the end-to-end training pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train_frac: f64,
    pub split_seed: u64,
    pub cv_folds: usize,
    pub cv_seed: u64,
    pub forest_seed: u64,
    pub feature_mode: FeatureMode,
    /// Keep rows whose simulation never settled. Off by default: transients
    /// would poison the regression target.
    pub include_nonconverged: bool,
    /// Hyperparameter grid; empty means the default grid.
    pub hp_grid: Vec<ForestHyperparams>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            split_seed: 17,
            cv_folds: 5,
            cv_seed: 42,
            forest_seed: 42,
            feature_mode: FeatureMode::Full,
            include_nonconverged: false,
            hp_grid: Vec::new(),
        }
    }
}

/// Everything the training pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub model: ForestModel,
    pub best_hp: ForestHyperparams,
    pub cv_table: Vec<CvEntry>,
    /// Held-out evaluation; the honest generalization estimate.
    pub test_report: RegimeReport,
    /// Same evaluation over the whole dataset; partly in-sample because the
    /// model saw the training portion.
    pub full_report: RegimeReport,
    pub train_case_ids: Vec<u32>,
    pub test_case_ids: Vec<u32>,
    /// Rows of the full dataset whose corrected value was clamped to zero.
    pub clamped_rows: Vec<usize>,
}

/// Minimum usable rows for the pipeline.
pub const MIN_PIPELINE_RECORDS: usize = 50;

/// Train the residual corrector end to end: stratified split, grid-search
/// CV on the training side, final fit, and theory-vs-corrected evaluation
/// on both the held-out split and the full dataset.
pub fn train_pipeline(records: &[CaseRecord], config: &PipelineConfig) -> Result<PipelineOutcome> {
    let usable: Vec<CaseRecord> = records
        .iter()
        .filter(|r| !r.is_failed() && (config.include_nonconverged || r.converged))
        .cloned()
        .collect();
    if usable.len() < MIN_PIPELINE_RECORDS {
        return Err(Error::InvalidParameter(format!(
            "pipeline needs at least {MIN_PIPELINE_RECORDS} converged records, found {}",
            usable.len()
        )));
    }

    let (train, test) = split(&usable, config.train_frac, config.split_seed)?;

    let x_train = build_feature_matrix_with_mode(&train, config.feature_mode)?;
    let y_train = residual_targets(&train)?;

    let grid = if config.hp_grid.is_empty() {
        forest::default_grid(x_train.n_cols, config.forest_seed)
    } else {
        config.hp_grid.clone()
    };
    let (best_hp, cv_table) =
        forest::grid_search_cv(&x_train, &y_train, &grid, config.cv_folds, config.cv_seed)?;
    let model = fit(&x_train, &y_train, &best_hp)?;

    let report_for = |subset: &[CaseRecord], scope: &str| -> Result<(RegimeReport, Vec<usize>)> {
        let x = build_matrix_like(&x_train, subset, config.feature_mode)?;
        let residual_hat = model.predict(&x)?;
        let theory: Vec<f64> = subset.iter().map(|r| r.vpp_theory_v).collect();
        let (corrected, clamped) = corrected_prediction(&theory, &residual_hat)?;
        Ok((evaluate_regimes(subset, &theory, &corrected, scope)?, clamped))
    };

    let (test_report, _) = report_for(&test, "test split")?;
    let (full_report, clamped_rows) = report_for(&usable, "full dataset, partly in-sample")?;

    Ok(PipelineOutcome {
        model,
        best_hp,
        cv_table,
        test_report,
        full_report,
        train_case_ids: train.iter().map(|r| r.case_id).collect(),
        test_case_ids: test.iter().map(|r| r.case_id).collect(),
        clamped_rows,
    })
}

/// Build a matrix for `records` with exactly the column set of `reference`.
///
/// One-hot columns are derived from the records they encode, so a subset
/// missing a stage or voltage level would otherwise produce a narrower
/// matrix than the model was trained on.
pub fn build_matrix_like(
    reference: &FeatureMatrix,
    records: &[CaseRecord],
    mode: FeatureMode,
) -> Result<FeatureMatrix> {
    let m = build_feature_matrix_with_mode(records, mode)?;
    if m.feature_names == reference.feature_names {
        return Ok(m);
    }
    // Re-project: copy matching columns, zero-fill missing one-hots.
    let mut missing = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(reference.n_cols); m.n_rows];
    for name in &reference.feature_names {
        match m.column_index(name) {
            Some(c) => {
                for (r, row) in rows.iter_mut().enumerate() {
                    row.push(m.get(r, c));
                }
            }
            None if name.starts_with("stage_") || name.starts_with("vin_") => {
                for row in rows.iter_mut() {
                    row.push(0.0);
                }
            }
            None => missing.push(name.clone()),
        }
    }
    // A level absent from the reference cannot be represented.
    let extra: Vec<String> = m
        .feature_names
        .iter()
        .filter(|n| !reference.feature_names.contains(n))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::FeatureMismatch(format!(
            "records need columns {extra:?} unknown to the model; model columns {missing:?} \
             cannot be derived"
        )));
    }
    FeatureMatrix::from_rows(reference.feature_names.clone(), mode, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(case_id: u32, n: u32, freq: f64, rload: f64, sim: f64, theory: f64) -> CaseRecord {
        CaseRecord {
            case_id,
            n_stages: n,
            vin_peak_v: 5e3,
            cap_f: 1e-6,
            freq_hz: freq,
            rload_ohm: rload,
            vdc_v: 2.0 * f64::from(n) * 5e3 * 0.9,
            vpp_sim_v: sim,
            vrms_sim_v: sim / 3.0,
            std_v: sim / 3.0,
            skewness: 0.1,
            kurtosis: 2.0,
            crest_factor: 1.5,
            i_load_a: 1e-3,
            vpp_theory_v: theory,
            ripple_factor_theory: 0.01,
            ripple_factor_sim: 0.012,
            residual_v: sim - theory,
            converged: true,
        }
    }

    #[test]
    fn residual_targets_are_sim_minus_theory() {
        let records = vec![
            record(0, 2, 500.0, 60e6, 500.0, 300.0),
            record(1, 4, 100.0, 12e6, 250.0, 250.0),
        ];
        let res = residual_targets(&records).unwrap();
        assert_eq!(res, vec![200.0, 0.0]);
        // Adding theory back reproduces the simulated value.
        for (r, d) in records.iter().zip(&res) {
            assert_eq!(r.vpp_theory_v + d, r.vpp_sim_v);
        }
    }

    #[test]
    fn residual_targets_flag_nonfinite_rows() {
        let mut bad = record(7, 2, 500.0, 60e6, 1.0, 1.0);
        bad.vpp_sim_v = f64::NAN;
        match residual_targets(&[bad]) {
            Err(Error::NonFinite { case_id, .. }) => assert_eq!(case_id, 7),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn corrected_prediction_sums_and_clamps() {
        let (vals, clamped) =
            corrected_prediction(&[300.0, 100.0, 250.0], &[180.0, -150.0, 0.0]).unwrap();
        assert_eq!(vals, vec![480.0, 0.0, 250.0]);
        assert_eq!(clamped, vec![1]);
    }

    #[test]
    fn metrics_hand_cases() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.bias, m.r2), (0.0, 0.0, 0.0, 1.0));

        let m = metrics(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.bias), (1.0, 1.0, 1.0));

        let m = metrics(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.mae, 3.5);
        assert_eq!(m.bias, -3.5);
    }

    #[test]
    fn metrics_reject_degenerate_targets() {
        assert!(matches!(
            metrics(&[1.0, 2.0], &[5.0, 5.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn metric_order_rmse_mae_bias() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..50 {
            let n = 2 + rng.below(40) as usize;
            let pred: Vec<f64> = (0..n).map(|_| rng.next_f64() * 10.0).collect();
            let target: Vec<f64> = (0..n).map(|_| rng.next_f64() * 10.0).collect();
            if let Ok(m) = metrics(&pred, &target) {
                assert!(m.rmse >= m.mae - 1e-12);
                assert!(m.mae >= m.bias.abs() - 1e-12);
            }
        }
    }

    /// 3 stages x 2 freq x 2 load synthetic grid with a known residual
    /// structure.
    fn synthetic_records() -> Vec<CaseRecord> {
        let mut out = Vec::new();
        let mut id = 0;
        for &n in &[2u32, 6, 8] {
            for &freq in &[50.0, 500.0] {
                for &rload in &[6e6, 60e6] {
                    for rep in 0..12 {
                        let theory = f64::from(n) * 100.0 / (freq / 50.0) * (12e6 / rload) as f64;
                        let sim = theory * 1.3 + f64::from(n) * 5.0 + rep as f64;
                        out.push(record(id, n, freq, rload, sim, theory));
                        id += 1;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn regime_predicates_partition_as_documented() {
        let records = synthetic_records();
        let count = |reg: Regime| records.iter().filter(|r| reg.matches(r)).count();
        assert_eq!(count(Regime::HighStage), 96); // stages 6 and 8
        assert_eq!(count(Regime::LowFrequency), 72); // freq 50
        assert_eq!(count(Regime::HeavyLoad), 72); // rload 6e6
        assert_eq!(count(Regime::Critical), 24);
    }

    #[test]
    fn evaluate_regimes_reports_five_rows() {
        let records = synthetic_records();
        let theory: Vec<f64> = records.iter().map(|r| r.vpp_theory_v).collect();
        let residual = residual_targets(&records).unwrap();
        let (perfect, _) = corrected_prediction(&theory, &residual).unwrap();
        let report = evaluate_regimes(&records, &theory, &perfect, "unit test").unwrap();

        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.rows[0].regime, "global");
        // A perfect corrector has zero error everywhere.
        for row in &report.rows {
            assert_eq!(row.corrected.rmse, 0.0);
            assert_eq!(row.rmse_reduction_pct, 100.0);
            assert!(row.theory.bias < 0.0, "theory must underestimate here");
        }
        let text = report.to_text();
        assert!(text.contains("global") && text.contains("critical"));
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("global,144,"));
    }

    #[test]
    fn zero_residual_model_reproduces_theory_metrics() {
        let records = synthetic_records();
        let theory: Vec<f64> = records.iter().map(|r| r.vpp_theory_v).collect();
        let zeros = vec![0.0; records.len()];
        let (corrected, clamped) = corrected_prediction(&theory, &zeros).unwrap();
        assert!(clamped.is_empty());
        assert_eq!(corrected, theory);
        let report = evaluate_regimes(&records, &theory, &corrected, "zero model").unwrap();
        for row in &report.rows {
            assert_eq!(row.theory, row.corrected);
        }
    }

    #[test]
    fn residual_vs_frequency_table() {
        let records = synthetic_records();
        let rows = export_residual_vs_frequency(&records);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].freq_hz, 50.0);
        assert_eq!(rows[1].freq_hz, 500.0);
        assert!(rows[0].mean_abs_residual_v > rows[1].mean_abs_residual_v);
        assert_eq!(rows[0].n_cases + rows[1].n_cases, records.len());

        assert!(export_residual_vs_frequency(&[]).is_empty());
        let csv = residual_vs_frequency_csv(&rows);
        assert!(csv.starts_with("freq_hz,mean_abs_residual_v,max_abs_residual_v,n_cases\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn pipeline_learns_the_synthetic_residual() {
        // Inflate the synthetic grid so strata stay splittable.
        let records = synthetic_records();
        let config = PipelineConfig {
            cv_folds: 3,
            hp_grid: vec![ForestHyperparams { n_trees: 30, ..Default::default() }],
            ..Default::default()
        };
        let outcome = train_pipeline(&records, &config).unwrap();

        let global_test = &outcome.test_report.rows[0];
        assert!(
            global_test.corrected.rmse < global_test.theory.rmse,
            "corrected {} vs theory {}",
            global_test.corrected.rmse,
            global_test.theory.rmse
        );
        // Partition bookkeeping.
        let mut ids = outcome.train_case_ids.clone();
        ids.extend(&outcome.test_case_ids);
        ids.sort_unstable();
        assert_eq!(ids, (0..records.len() as u32).collect::<Vec<_>>());

        // Determinism end to end.
        let again = train_pipeline(&records, &config).unwrap();
        assert_eq!(outcome.model, again.model);
        assert_eq!(outcome.test_report, again.test_report);
        assert_eq!(outcome.full_report, again.full_report);
    }

    #[test]
    fn pipeline_rejects_thin_datasets() {
        let records: Vec<CaseRecord> = synthetic_records().into_iter().take(20).collect();
        assert!(train_pipeline(&records, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn matrix_like_reprojects_missing_levels() {
        let records = synthetic_records();
        let reference = build_feature_matrix_with_mode(&records, FeatureMode::Full).unwrap();
        // Subset missing stages 6 and 8 entirely.
        let subset: Vec<CaseRecord> =
            records.iter().filter(|r| r.n_stages == 2).cloned().collect();
        let m = build_matrix_like(&reference, &subset, FeatureMode::Full).unwrap();
        assert_eq!(m.feature_names, reference.feature_names);
        let stage8 = m.column_index("stage_8").unwrap();
        for r in 0..m.n_rows {
            assert_eq!(m.get(r, stage8), 0.0);
        }
    }
}
