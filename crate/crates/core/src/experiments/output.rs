//! CSV artifacts. Floats are written in shortest round-trip form and missing
//! values as empty fields, so every emitted number is finite.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Scheme, SchemeRow, SchemeTable};
use crate::error::{JcasError, Result};
use crate::estimation::MseRow;

pub const COMBINED_FILE: &str = "combined.csv";

const SCHEME_HEADER: [&str; 9] = [
    "snr_db",
    "seeds",
    "infeasible",
    "converged",
    "rate_bps_hz",
    "si_power_db",
    "crb_rad2",
    "mse_rad2",
    "crb_snapshots_rad2",
];

/// Metrics of the long-format file, one row each per scheme and SNR point.
pub const METRICS: [&str; 7] = [
    "rate_bps_hz",
    "si_power_db",
    "crb_rad2",
    "mse_rad2",
    "crb_snapshots_rad2",
    "infeasible",
    "converged",
];

/// One row of the long-format file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct MseRecord {
    snr_db: f64,
    mse_rad2: Option<f64>,
    crb_rad2: Option<f64>,
    trials: usize,
    infeasible: bool,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn long_rows(tables: &[SchemeTable]) -> Vec<LongRow> {
    let mut out = Vec::new();
    for t in tables {
        for metric in METRICS {
            for r in &t.rows {
                let value = match metric {
                    "rate_bps_hz" => r.rate_bps_hz,
                    "si_power_db" => r.si_power_db,
                    "crb_rad2" => r.crb_rad2,
                    "mse_rad2" => r.mse_rad2,
                    "crb_snapshots_rad2" => r.crb_snapshots_rad2,
                    "infeasible" => Some(r.infeasible as f64),
                    _ => Some(r.converged as f64),
                };
                out.push(LongRow {
                    scheme: t.scheme,
                    snr_db: r.snr_db,
                    metric: metric.to_string(),
                    value: value.and_then(finite),
                });
            }
        }
    }
    out
}

fn write_rows<W: Write, T: Serialize>(out: W, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(JcasError::from)
}

pub fn write_scheme_csv<W: Write>(out: W, rows: &[SchemeRow]) -> Result<()> {
    let clean = rows.iter().map(|r| SchemeRow {
        rate_bps_hz: r.rate_bps_hz.and_then(finite),
        si_power_db: r.si_power_db.and_then(finite),
        crb_rad2: r.crb_rad2.and_then(finite),
        mse_rad2: r.mse_rad2.and_then(finite),
        crb_snapshots_rad2: r.crb_snapshots_rad2.and_then(finite),
        ..r.clone()
    });
    write_rows(out, &SCHEME_HEADER, clean)
}

pub fn read_scheme_csv<R: Read>(input: R) -> Result<Vec<SchemeRow>> {
    read_rows(input)
}

pub fn write_long_csv<W: Write>(out: W, tables: &[SchemeTable]) -> Result<()> {
    write_rows(out, &["scheme", "snr_db", "metric", "value"], long_rows(tables))
}

pub fn read_long_csv<R: Read>(input: R) -> Result<Vec<LongRow>> {
    read_rows(input)
}

/// Writes the sensing study table; infeasible rows keep their SNR and flag
/// with empty MSE and CRB fields.
pub fn write_mse_csv<W: Write>(out: W, rows: &[MseRow]) -> Result<()> {
    let records = rows.iter().map(|r| MseRecord {
        snr_db: r.snr_db,
        mse_rad2: finite(r.mse_rad2),
        crb_rad2: finite(r.crb_rad2),
        trials: r.trials,
        infeasible: r.infeasible,
    });
    write_rows(out, &["snr_db", "mse_rad2", "crb_rad2", "trials", "infeasible"], records)
}

/// Reads a table written by [`write_mse_csv`]; empty fields come back as NaN.
pub fn read_mse_csv<R: Read>(input: R) -> Result<Vec<MseRow>> {
    let records: Vec<MseRecord> = read_rows(input)?;
    Ok(records
        .into_iter()
        .map(|r| MseRow {
            snr_db: r.snr_db,
            mse_rad2: r.mse_rad2.unwrap_or(f64::NAN),
            crb_rad2: r.crb_rad2.unwrap_or(f64::NAN),
            trials: r.trials,
            infeasible: r.infeasible,
        })
        .collect())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| JcasError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes `<scheme>.csv` per table and [`COMBINED_FILE`] into `dir`,
/// creating it if needed. Returns the written paths.
pub fn emit_outputs(dir: &Path, tables: &[SchemeTable]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| JcasError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.scheme));
        write_scheme_csv(create(&path)?, &t.rows)?;
        written.push(path);
    }
    let path = dir.join(COMBINED_FILE);
    write_long_csv(create(&path)?, tables)?;
    written.push(path);
    Ok(written)
}
