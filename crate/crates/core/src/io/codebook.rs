//! Codebook persistence.
//!
//! ```text
//! "MSTCBK1\n"
//! {"k":..,"n_channels":..,"pad_id":..,"meta":{..}}\n
//! k × N f32 little-endian centroids, row-major, µV
//! ```
//!
//! Centroids are stored as `f32`, so a write/read cycle is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cluster::{Codebook, CodebookMeta};
use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: &[u8; 8] = b"MSTCBK1\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    k: usize,
    n_channels: usize,
    pad_id: u32,
    meta: CodebookMeta,
}

pub fn encode_codebook(codebook: &Codebook) -> Vec<u8> {
    let header = Header {
        k: codebook.k(),
        n_channels: codebook.n_channels(),
        pad_id: codebook.pad_id(),
        meta: codebook.meta.clone(),
    };
    let mut out = CODEBOOK_MAGIC.to_vec();
    out.extend(serde_json::to_vec(&header).expect("header serializes"));
    out.push(b'\n');
    for &v in codebook.centroids().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    if !bytes.starts_with(CODEBOOK_MAGIC) {
        return Err(Error::Format("not a codebook file (magic mismatch)".into()));
    }
    let rest = &bytes[CODEBOOK_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated codebook header".into()))?;
    let header: Header = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::Format(format!("codebook header: {e}")))?;
    let payload = &rest[nl + 1..];
    let expected = header.k * header.n_channels * 4;
    if payload.len() != expected {
        return Err(Error::Truncated {
            what: "codebook centroids",
            expected,
            actual: payload.len(),
        });
    }
    if header.pad_id as usize != header.k {
        return Err(Error::Format(format!(
            "pad_id {} must equal k = {}",
            header.pad_id, header.k
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let centroids = Array2::from_shape_vec((header.k, header.n_channels), values)
        .map_err(|e| Error::shape(e.to_string()))?;
    Codebook::new(centroids, header.meta)
}

pub fn write_codebook(codebook: &Codebook, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_codebook(codebook))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    decode_codebook(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(k: usize, n: usize) -> Codebook {
        let c = Array2::from_shape_fn((k, n), |(i, j)| i as f32 * 1.5 - j as f32 / 7.0);
        Codebook::new(
            c,
            CodebookMeta::for_channels((0..n).map(|j| format!("c{j}")).collect()),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_2x6() {
        let cb = sample(2, 6);
        let back = decode_codebook(&encode_codebook(&cb)).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.pad_id(), 2);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_codebook(&sample(2, 6));
        bytes[0] = b'X';
        assert!(matches!(decode_codebook(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn missing_row() {
        let bytes = encode_codebook(&sample(1000, 6));
        let short = &bytes[..bytes.len() - 6 * 4];
        match decode_codebook(short).unwrap_err() {
            Error::Truncated {
                expected, actual, ..
            } => {
                assert_eq!(expected, 1000 * 6 * 4);
                assert_eq!(actual, 999 * 6 * 4);
            }
            e => panic!("unexpected {e}"),
        }
    }
}
