//! Windowed dataset files.
//!
//! One text file per recording:
//!
//! ```text
//! #MSTDS1
//! {"kind":"tokens","subject_id":"rec01","fs":100.0,"label_rate":0.0333..,"window_s":300.0,"k":32,...}
//! <window_index>\t<label,label,...>\t<value,value,...>
//! ```
//!
//! Token files hold microstate ids; feature files hold the `[rows × cols]`
//! band-power matrix of each window, row-major. An `index.tsv` next to the
//! files lists `file`, `subject_id` and window count per recording.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::LabeledWindow;

pub const DATASET_MAGIC: &str = "#MSTDS1";
pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Tokens,
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub kind: DatasetKind,
    pub subject_id: String,
    pub fs: f64,
    pub label_rate: f64,
    pub window_s: f64,
    /// Codebook size for token files; the PAD id equals `k`.
    #[serde(default)]
    pub k: Option<usize>,
    /// `[rows, cols]` of each feature window.
    #[serde(default)]
    pub shape: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub window_index: usize,
    pub labels: Vec<u32>,
    pub values: Array2<f64>,
}

fn join<T: std::fmt::Display>(out: &mut String, items: impl IntoIterator<Item = T>) {
    for (i, v) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
}

fn split_list<T: std::str::FromStr>(field: &str, line: usize) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|s| {
            s.parse().map_err(|_| Error::Row {
                row: line,
                message: format!("bad value {s:?}"),
            })
        })
        .collect()
}

fn header_line(header: &DatasetHeader) -> String {
    format!(
        "{DATASET_MAGIC}\n{}\n",
        serde_json::to_string(header).expect("header serializes")
    )
}

pub fn format_token_file(header: &DatasetHeader, windows: &[LabeledWindow]) -> String {
    let mut out = header_line(header);
    for w in windows {
        let _ = write!(out, "{}\t", w.window_index);
        join(&mut out, &w.labels);
        out.push('\t');
        join(&mut out, &w.tokens);
        out.push('\n');
    }
    out
}

pub fn format_feature_file(header: &DatasetHeader, windows: &[FeatureWindow]) -> String {
    let mut out = header_line(header);
    for w in windows {
        let _ = write!(out, "{}\t", w.window_index);
        join(&mut out, &w.labels);
        out.push('\t');
        join(&mut out, w.values.iter());
        out.push('\n');
    }
    out
}

/// `(line, window_index, labels, unparsed values)`
type RawRecord<'a> = (usize, usize, Vec<u32>, &'a str);

fn parse_records(text: &str) -> Result<(DatasetHeader, Vec<RawRecord<'_>>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == DATASET_MAGIC => {}
        _ => {
            return Err(Error::Format(format!(
                "dataset file must start with {DATASET_MAGIC}"
            )))
        }
    }
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::Format("missing dataset header".into()))?;
    let header: DatasetHeader =
        serde_json::from_str(head).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(idx), Some(labels), Some(values)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Row {
                row: i,
                message: "expected 3 tab-separated fields".into(),
            });
        };
        let idx = idx.parse().map_err(|_| Error::Row {
            row: i,
            message: format!("bad window index {idx:?}"),
        })?;
        records.push((i, idx, split_list(labels, i)?, values));
    }
    Ok((header, records))
}

pub fn parse_token_file(text: &str) -> Result<(DatasetHeader, Vec<LabeledWindow>)> {
    let (header, records) = parse_records(text)?;
    if header.kind != DatasetKind::Tokens {
        return Err(Error::Format("expected a token dataset".into()));
    }
    let windows = records
        .into_iter()
        .map(|(line, window_index, labels, values)| {
            Ok(LabeledWindow {
                tokens: split_list(values, line)?,
                labels,
                window_index,
                subject_id: header.subject_id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((header, windows))
}

pub fn parse_feature_file(text: &str) -> Result<(DatasetHeader, Vec<FeatureWindow>)> {
    let (header, records) = parse_records(text)?;
    let [rows, cols] = match (header.kind, header.shape) {
        (DatasetKind::Features, Some(shape)) => shape,
        _ => {
            return Err(Error::Format(
                "expected a feature dataset with a shape".into(),
            ))
        }
    };
    let windows = records
        .into_iter()
        .map(|(line, window_index, labels, values)| {
            let v: Vec<f64> = split_list(values, line)?;
            let values = Array2::from_shape_vec((rows, cols), v).map_err(|_| Error::Row {
                row: line,
                message: format!("expected {} values", rows * cols),
            })?;
            Ok(FeatureWindow {
                window_index,
                labels,
                values,
            })
        })
        .collect::<Result<_>>()?;
    Ok((header, windows))
}

pub fn read_token_file(path: &Path) -> Result<(DatasetHeader, Vec<LabeledWindow>)> {
    parse_token_file(&fs::read_to_string(path)?)
}

pub fn read_feature_file(path: &Path) -> Result<(DatasetHeader, Vec<FeatureWindow>)> {
    parse_feature_file(&fs::read_to_string(path)?)
}

/// Peek at a dataset file's header.
pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(DATASET_MAGIC) {
        return Err(Error::Format(format!(
            "{}: not a dataset file",
            path.display()
        )));
    }
    serde_json::from_str(lines.next().unwrap_or_default())
        .map_err(|e| Error::Format(format!("dataset header: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub file: String,
    pub subject_id: String,
    pub windows: usize,
}

pub fn format_index(entries: &[IndexEntry]) -> String {
    let mut out = String::from("file\tsubject_id\twindows\n");
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}", e.file, e.subject_id, e.windows);
    }
    out
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexEntry>> {
    let text = fs::read_to_string(dir.join(INDEX_FILE))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Row {
                    row: i,
                    message: "index rows need 3 fields".into(),
                });
            }
            Ok(IndexEntry {
                file: f[0].to_string(),
                subject_id: f[1].to_string(),
                windows: f[2].parse().map_err(|_| Error::Row {
                    row: i,
                    message: format!("bad window count {:?}", f[2]),
                })?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn header(kind: DatasetKind) -> DatasetHeader {
        DatasetHeader {
            kind,
            subject_id: "rec7".into(),
            fs: 100.0,
            label_rate: 1.0 / 30.0,
            window_s: 300.0,
            k: (kind == DatasetKind::Tokens).then_some(32),
            shape: (kind == DatasetKind::Features).then_some([2, 3]),
        }
    }

    #[test]
    fn token_file_roundtrip() {
        let windows = vec![
            LabeledWindow {
                tokens: vec![1, 2, 32],
                labels: vec![0, 3],
                window_index: 0,
                subject_id: "rec7".into(),
            },
            LabeledWindow {
                tokens: vec![5, 5, 5],
                labels: vec![3, 3],
                window_index: 2,
                subject_id: "rec7".into(),
            },
        ];
        let text = format_token_file(&header(DatasetKind::Tokens), &windows);
        assert!(text.contains("\n2\t3,3\t5,5,5\n"));
        let (h, back) = parse_token_file(&text).unwrap();
        assert_eq!(h, header(DatasetKind::Tokens));
        assert_eq!(back, windows);
    }

    #[test]
    fn feature_file_roundtrip() {
        let windows = vec![FeatureWindow {
            window_index: 4,
            labels: vec![1],
            values: array![[0.1, 2.5e-9, 3.0], [4.0, -0.0, 1e300]],
        }];
        let text = format_feature_file(&header(DatasetKind::Features), &windows);
        let (_, back) = parse_feature_file(&text).unwrap();
        assert_eq!(back, windows);
        assert!(parse_token_file(&text).is_err());
    }

    #[test]
    fn malformed() {
        assert!(matches!(parse_token_file("nope"), Err(Error::Format(_))));
        let mut text = format_token_file(&header(DatasetKind::Tokens), &[]);
        text.push_str("0\t1\n");
        assert!(matches!(parse_token_file(&text), Err(Error::Row { .. })));
    }
}
