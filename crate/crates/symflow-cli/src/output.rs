//! Trajectory and summary serialization: CSV with fixed float formatting and
//! a JSON mirror with named fields.

use anyhow::{Context, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Fixed-width float formatting used in every CSV cell: scientific notation
/// with 17 significant digits, enough to reproduce any f64 bit pattern.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// An optional cell renders as the empty string when absent.
pub fn fmt_opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn fmt_opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `rows` of pre-rendered cells under `header` as CSV.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes any serializable document as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}
