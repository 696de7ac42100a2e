//! Raw binary recording container.
//!
//! ```text
//! "MSTRAW1\n"
//! {"channel_names":[...],"fs":..,"n_samples":..,"labels":[..]|null,"label_rate":..|null}\n
//! f32 little-endian samples, channel-major ([C × T] row-major)
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Recording;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"MSTRAW1\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    channel_names: Vec<String>,
    fs: f64,
    n_samples: usize,
    labels: Option<Vec<u32>>,
    label_rate: Option<f64>,
}

pub fn encode_raw(rec: &Recording) -> Vec<u8> {
    let header = RawHeader {
        channel_names: rec.channel_names.clone(),
        fs: rec.fs,
        n_samples: rec.n_samples(),
        labels: rec.labels.clone(),
        label_rate: rec.label_rate,
    };
    let mut out = RAW_MAGIC.to_vec();
    out.extend(serde_json::to_vec(&header).expect("header serializes"));
    out.push(b'\n');
    out.reserve(rec.data.len() * 4);
    for &v in rec.data.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Recording> {
    if !bytes.starts_with(RAW_MAGIC) {
        return Err(Error::Format("missing MSTRAW1 magic".into()));
    }
    let rest = &bytes[RAW_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated raw header".into()))?;
    let header: RawHeader = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::Format(format!("raw header: {e}")))?;
    let payload = &rest[nl + 1..];
    let expected = header.channel_names.len() * header.n_samples * 4;
    if payload.len() != expected {
        return Err(Error::Truncated {
            what: "raw sample payload",
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let data = Array2::from_shape_vec((header.channel_names.len(), header.n_samples), values)
        .map_err(|e| Error::shape(e.to_string()))?;
    let rec = Recording::new(header.channel_names, header.fs, data)?;
    match (header.labels, header.label_rate) {
        (Some(labels), Some(rate)) => rec.with_labels(labels, rate),
        (None, None) => Ok(rec),
        _ => Err(Error::Format(
            "labels and label_rate must be given together".into(),
        )),
    }
}

pub fn read_raw(path: &Path) -> Result<Recording> {
    decode_raw(&fs::read(path)?)
}

pub fn write_raw(path: &Path, rec: &Recording) -> Result<()> {
    super::write_atomic(path, &encode_raw(rec))
}
