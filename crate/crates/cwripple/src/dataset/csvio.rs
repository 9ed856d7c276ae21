//! Dataset CSV persistence.
//!
//! Floats are written with 17 significant digits so that a write/read
//! round trip reproduces every value bit for bit. Reading is header-keyed,
//! so column order is free, but the column *set* must match exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::CaseRecord;

/// Fixed dataset header (canonical write order).
pub const DATASET_COLUMNS: [&str; 19] = [
    "case_id",
    "n_stages",
    "vin_peak_v",
    "cap_f",
    "freq_hz",
    "rload_ohm",
    "vdc_v",
    "vpp_sim_v",
    "vrms_sim_v",
    "std_v",
    "skewness",
    "kurtosis",
    "crest_factor",
    "i_load_a",
    "vpp_theory_v",
    "ripple_factor_theory",
    "ripple_factor_sim",
    "residual_v",
    "converged",
];

/// Schema/version comment emitted ahead of the header. It pins the moment
/// conventions the statistical columns were computed with.
pub const SCHEMA_COMMENT: &str =
    "# cwripple dataset v1; moments=population; kurtosis=pearson; crest=ac_peak/rms; rf_theory=sawtooth(vpp)/vdc_sim";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(records: &[CaseRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(records, &mut w)
}

pub fn write_csv_to(records: &[CaseRecord], w: &mut impl Write) -> Result<()> {
    writeln!(w, "{SCHEMA_COMMENT}")?;
    writeln!(w, "{}", DATASET_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case_id,
            r.n_stages,
            fmt(r.vin_peak_v),
            fmt(r.cap_f),
            fmt(r.freq_hz),
            fmt(r.rload_ohm),
            fmt(r.vdc_v),
            fmt(r.vpp_sim_v),
            fmt(r.vrms_sim_v),
            fmt(r.std_v),
            fmt(r.skewness),
            fmt(r.kurtosis),
            fmt(r.crest_factor),
            fmt(r.i_load_a),
            fmt(r.vpp_theory_v),
            fmt(r.ripple_factor_theory),
            fmt(r.ripple_factor_sim),
            fmt(r.residual_v),
            r.converged,
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CaseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let missing: Vec<String> = DATASET_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .map(|c| c.to_string())
        .collect();
    let unexpected: Vec<String> = headers
        .iter()
        .filter(|h| !DATASET_COLUMNS.contains(&h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::Schema { missing, unexpected });
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let idx: Vec<usize> = DATASET_COLUMNS.iter().map(|c| col(c)).collect();

    let path_str = path.display().to_string();
    let parse_f64 = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse {
            path: path_str.clone(),
            message: format!("invalid float {s:?} on record {line}"),
        })
    };

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let get = |k: usize| row.get(idx[k]).unwrap_or("");
        let record = CaseRecord {
            case_id: get(0).parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                message: format!("invalid case_id {:?} on record {line}", get(0)),
            })?,
            n_stages: get(1).parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                message: format!("invalid n_stages {:?} on record {line}", get(1)),
            })?,
            vin_peak_v: parse_f64(get(2), line)?,
            cap_f: parse_f64(get(3), line)?,
            freq_hz: parse_f64(get(4), line)?,
            rload_ohm: parse_f64(get(5), line)?,
            vdc_v: parse_f64(get(6), line)?,
            vpp_sim_v: parse_f64(get(7), line)?,
            vrms_sim_v: parse_f64(get(8), line)?,
            std_v: parse_f64(get(9), line)?,
            skewness: parse_f64(get(10), line)?,
            kurtosis: parse_f64(get(11), line)?,
            crest_factor: parse_f64(get(12), line)?,
            i_load_a: parse_f64(get(13), line)?,
            vpp_theory_v: parse_f64(get(14), line)?,
            ripple_factor_theory: parse_f64(get(15), line)?,
            ripple_factor_sim: parse_f64(get(16), line)?,
            residual_v: parse_f64(get(17), line)?,
            converged: match get(18) {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Parse {
                        path: path_str.clone(),
                        message: format!("invalid converged flag {other:?} on record {line}"),
                    })
                }
            },
        };
        records.push(record);
    }
    Ok(records)
}
