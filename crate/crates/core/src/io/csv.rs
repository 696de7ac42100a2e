//! Delimited-text recordings.
//!
//! Layout is detected from the first row: if any field is non-numeric the
//! row is a channel header and each column is a channel, otherwise every
//! row is a channel.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

/// Read a CSV recording sampled at `fs`. `channel_names` overrides the
/// header (column layout) or names the rows (row layout).
pub fn read_csv_recording(
    path: &Path,
    fs: f64,
    channel_names: Option<&[String]>,
) -> Result<Recording> {
    parse_csv_recording(&fs::read_to_string(path)?, fs, channel_names)
}

pub fn parse_csv_recording(
    text: &str,
    fs: f64,
    channel_names: Option<&[String]>,
) -> Result<Recording> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Row {
            row: i,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::Row {
            row: 0,
            message: "empty input".into(),
        });
    }

    let header = rows[0].iter().any(|f| f.parse::<f64>().is_err());
    let width = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Row {
                row: i,
                message: format!("expected {width} fields, found {}", r.len()),
            });
        }
    }
    let parse = |row: usize, s: &str| -> Result<f64> {
        let v: f64 = s.parse().map_err(|_| Error::Row {
            row,
            message: format!("not a number: {s:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Value(format!("row {row}: non-finite value {s:?}")));
        }
        Ok(v)
    };

    let (names, data) = if header {
        let body = &rows[1..];
        let mut data = Array2::zeros((width, body.len()));
        for (t, r) in body.iter().enumerate() {
            for (c, s) in r.iter().enumerate() {
                data[[c, t]] = parse(t + 1, s)?;
            }
        }
        (rows[0].clone(), data)
    } else {
        let mut data = Array2::zeros((rows.len(), width));
        for (c, r) in rows.iter().enumerate() {
            for (t, s) in r.iter().enumerate() {
                data[[c, t]] = parse(c, s)?;
            }
        }
        let names = (0..rows.len()).map(|c| format!("ch{c}")).collect();
        (names, data)
    };

    let names = match channel_names {
        Some(given) if given.len() != data.nrows() => {
            return Err(Error::shape(format!(
                "{} channel names given for {} channels",
                given.len(),
                data.nrows()
            )))
        }
        Some(given) => given.to_vec(),
        None => names,
    };
    Recording::new(names, fs, data)
}

/// Column layout with a header row. Values are written with full `f64`
/// round-trip precision.
pub fn format_csv(rec: &Recording) -> String {
    let mut out = rec.channel_names.join(",");
    out.push('\n');
    for col in rec.data.columns() {
        for (i, v) in col.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, rec: &Recording) -> Result<()> {
    super::write_atomic(path, format_csv(rec).as_bytes())
}
