//! Continuous EDF reader and writer.
//!
//! Only the signal payload is used: EDF+ annotation signals are skipped and
//! discontinuous (EDF+D) files are not supported. HSP-style PSG exports are
//! assumed to be EDF; other containers go through [`super::raw`] or CSV.
//!
//! Layout: a 256-byte fixed header, then 256 bytes per signal stored as
//! field arrays (all labels, then all transducers, ...), then data records.
//! Each record holds `samples_per_record` 16-bit little-endian samples for
//! every signal in turn.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const PER_SIGNAL: usize = 256;
const ANNOTATION_LABEL: &str = "EDF Annotations";

// (width) of each per-signal field, in file order
const SIGNAL_FIELDS: [usize; 10] = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i64,
    pub digital_max: i64,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl EdfSignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label.trim() == ANNOTATION_LABEL
    }

    fn gain(&self) -> Result<f64> {
        if self.digital_max == self.digital_min {
            return Err(Error::Calibration {
                signal: self.label.clone(),
                value: self.digital_min,
            });
        }
        Ok((self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64)
    }

    /// Linear digital → physical calibration map.
    pub fn to_physical(&self, digital: i16) -> Result<f64> {
        let gain = self.gain()?;
        Ok((digital as i64 - self.digital_min) as f64 * gain + self.physical_min)
    }
}

/// A parsed EDF file with its digital samples, one vector per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfFile {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub n_records: usize,
    pub record_duration: f64,
    pub signals: Vec<EdfSignalHeader>,
    pub digital: Vec<Vec<i16>>,
}

fn field(bytes: &[u8], offset: usize, len: usize) -> Result<&str> {
    let raw = &bytes[offset..offset + len];
    if !raw.is_ascii() {
        return Err(Error::Parse {
            offset,
            message: "non-ASCII header field".into(),
        });
    }
    // checked ASCII above
    Ok(std::str::from_utf8(raw)
        .unwrap()
        .trim_end_matches([' ', '\0']))
}

fn numeric<T: std::str::FromStr>(bytes: &[u8], offset: usize, len: usize, what: &str) -> Result<T> {
    let text = field(bytes, offset, len)?.trim();
    text.parse().map_err(|_| Error::Parse {
        offset,
        message: format!("{what}: expected a number, found {text:?}"),
    })
}

/// Parse an EDF byte buffer.
pub fn parse_edf(bytes: &[u8]) -> Result<EdfFile> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::Truncated {
            what: "EDF header",
            expected: FIXED_HEADER,
            actual: bytes.len(),
        });
    }
    let version = field(bytes, 0, 8)?.to_string();
    let patient = field(bytes, 8, 80)?.to_string();
    let recording = field(bytes, 88, 80)?.to_string();
    let start_date = field(bytes, 168, 8)?.to_string();
    let start_time = field(bytes, 176, 8)?.to_string();
    let declared_records: i64 = numeric(bytes, 236, 8, "number of data records")?;
    let record_duration: f64 = numeric(bytes, 244, 8, "data record duration")?;
    let ns: usize = numeric(bytes, 252, 4, "number of signals")?;

    let header_len = FIXED_HEADER + PER_SIGNAL * ns;
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            what: "EDF signal header",
            expected: header_len,
            actual: bytes.len(),
        });
    }
    if !(record_duration > 0.0) {
        return Err(Error::Parse {
            offset: 244,
            message: format!("record duration must be positive, got {record_duration}"),
        });
    }

    let mut offsets = [0usize; 10];
    let mut at = FIXED_HEADER;
    for (slot, width) in offsets.iter_mut().zip(SIGNAL_FIELDS) {
        *slot = at;
        at += width * ns;
    }
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let at = |f: usize| offsets[f] + i * SIGNAL_FIELDS[f];
        signals.push(EdfSignalHeader {
            label: field(bytes, at(0), 16)?.trim().to_string(),
            transducer: field(bytes, at(1), 80)?.to_string(),
            physical_dimension: field(bytes, at(2), 8)?.trim().to_string(),
            physical_min: numeric(bytes, at(3), 8, "physical minimum")?,
            physical_max: numeric(bytes, at(4), 8, "physical maximum")?,
            digital_min: numeric(bytes, at(5), 8, "digital minimum")?,
            digital_max: numeric(bytes, at(6), 8, "digital maximum")?,
            prefilter: field(bytes, at(7), 80)?.to_string(),
            samples_per_record: numeric(bytes, at(8), 8, "samples per record")?,
        });
    }

    let record_bytes: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let data = &bytes[header_len..];
    let n_records = if declared_records < 0 {
        // -1: unknown while recording, infer from payload
        data.len().checked_div(record_bytes).unwrap_or(0)
    } else {
        declared_records as usize
    };
    let expected = n_records * record_bytes;
    if data.len() < expected {
        return Err(Error::Truncated {
            what: "EDF data records",
            expected,
            actual: data.len(),
        });
    }

    let mut digital: Vec<Vec<i16>> = signals
        .iter()
        .map(|s| Vec::with_capacity(s.samples_per_record * n_records))
        .collect();
    let mut pos = 0;
    for _ in 0..n_records {
        for (sig, out) in signals.iter().zip(digital.iter_mut()) {
            let chunk = &data[pos..pos + sig.samples_per_record * 2];
            out.extend(
                chunk
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]])),
            );
            pos += chunk.len();
        }
    }

    Ok(EdfFile {
        version,
        patient,
        recording,
        start_date,
        start_time,
        n_records,
        record_duration,
        signals,
        digital,
    })
}

impl EdfFile {
    /// Convert to a [`Recording`], skipping annotation signals.
    ///
    /// A single sampling rate is kept: when signals disagree, the rate shared
    /// by the most signals wins (ties go to the earliest signal) and the
    /// remaining signals are dropped.
    pub fn to_recording(&self) -> Result<Recording> {
        let rate = |s: &EdfSignalHeader| s.samples_per_record as f64 / self.record_duration;
        let candidates: Vec<usize> = (0..self.signals.len())
            .filter(|&i| !self.signals[i].is_annotation())
            .collect();
        let mut best: Option<(f64, usize)> = None;
        for &i in &candidates {
            let fs = rate(&self.signals[i]);
            let count = candidates
                .iter()
                .filter(|&&j| rate(&self.signals[j]) == fs)
                .count();
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((fs, count));
            }
        }
        let Some((fs, _)) = best else {
            return Err(Error::Format("EDF file holds no signal channels".into()));
        };
        let keep: Vec<usize> = candidates
            .into_iter()
            .filter(|&i| rate(&self.signals[i]) == fs)
            .collect();

        let n_samples = self.digital[keep[0]].len();
        let mut data = Array2::zeros((keep.len(), n_samples));
        for (row, &i) in keep.iter().enumerate() {
            let sig = &self.signals[i];
            let gain = sig.gain()?;
            for (dst, &d) in data.row_mut(row).iter_mut().zip(&self.digital[i]) {
                *dst = (d as i64 - sig.digital_min) as f64 * gain + sig.physical_min;
            }
        }
        let names = keep
            .iter()
            .map(|&i| self.signals[i].label.clone())
            .collect();
        Recording::new(names, fs, data)
    }

    /// Quantize a recording to 16-bit digital values.
    ///
    /// Physical bounds are the integer floor/ceil of each channel's range so
    /// they fit the 8-character header fields. The trailing partial record,
    /// if any, is zero-padded in the digital domain.
    pub fn from_recording(rec: &Recording, record_duration: f64) -> Result<EdfFile> {
        let spr_f = rec.fs * record_duration;
        let spr = spr_f.round() as usize;
        if spr == 0 || (spr_f - spr as f64).abs() > 1e-9 {
            return Err(Error::param(format!(
                "fs · record duration must be a positive integer, got {spr_f}"
            )));
        }
        let n_records = rec.n_samples().div_ceil(spr);
        let (dmin, dmax) = (i16::MIN as i64, i16::MAX as i64);
        let mut signals = Vec::new();
        let mut digital = Vec::new();
        for (name, row) in rec.channel_names.iter().zip(rec.data.rows()) {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo.is_finite() && hi.is_finite()) && rec.n_samples() > 0 {
                return Err(Error::Value(format!(
                    "channel {name} holds non-finite samples"
                )));
            }
            let (mut pmin, mut pmax) = if rec.n_samples() == 0 {
                (0.0, 1.0)
            } else {
                (lo.floor(), hi.ceil())
            };
            if pmax <= pmin {
                pmin -= 1.0;
                pmax += 1.0;
            }
            let header = EdfSignalHeader {
                label: name.clone(),
                transducer: String::new(),
                physical_dimension: "uV".into(),
                physical_min: pmin,
                physical_max: pmax,
                digital_min: dmin,
                digital_max: dmax,
                prefilter: String::new(),
                samples_per_record: spr,
            };
            let scale = (dmax - dmin) as f64 / (pmax - pmin);
            let mut samples: Vec<i16> = row
                .iter()
                .map(|&v| {
                    ((v - pmin) * scale + dmin as f64)
                        .round()
                        .clamp(dmin as f64, dmax as f64) as i16
                })
                .collect();
            samples.resize(n_records * spr, 0);
            signals.push(header);
            digital.push(samples);
        }
        Ok(EdfFile {
            version: "0".into(),
            patient: "X X X X".into(),
            recording: "Startdate X X X X".into(),
            start_date: "01.01.85".into(),
            start_time: "00.00.00".into(),
            n_records,
            record_duration,
            signals,
            digital,
        })
    }

    /// Serialize to EDF bytes.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let ns = self.signals.len();
        let header_len = FIXED_HEADER + PER_SIGNAL * ns;
        let mut out = Vec::with_capacity(header_len);
        put(&mut out, &self.version, 8)?;
        put(&mut out, &self.patient, 80)?;
        put(&mut out, &self.recording, 80)?;
        put(&mut out, &self.start_date, 8)?;
        put(&mut out, &self.start_time, 8)?;
        put(&mut out, &header_len.to_string(), 8)?;
        put(&mut out, "", 44)?;
        put(&mut out, &self.n_records.to_string(), 8)?;
        put(&mut out, &fmt_number(self.record_duration), 8)?;
        put(&mut out, &ns.to_string(), 4)?;
        for s in &self.signals {
            put(&mut out, &s.label, 16)?;
        }
        for s in &self.signals {
            put(&mut out, &s.transducer, 80)?;
        }
        for s in &self.signals {
            put(&mut out, &s.physical_dimension, 8)?;
        }
        for s in &self.signals {
            put(&mut out, &fmt_number(s.physical_min), 8)?;
        }
        for s in &self.signals {
            put(&mut out, &fmt_number(s.physical_max), 8)?;
        }
        for s in &self.signals {
            put(&mut out, &s.digital_min.to_string(), 8)?;
        }
        for s in &self.signals {
            put(&mut out, &s.digital_max.to_string(), 8)?;
        }
        for s in &self.signals {
            put(&mut out, &s.prefilter, 80)?;
        }
        for s in &self.signals {
            put(&mut out, &s.samples_per_record.to_string(), 8)?;
        }
        for _ in &self.signals {
            put(&mut out, "", 32)?;
        }
        for r in 0..self.n_records {
            for (s, samples) in self.signals.iter().zip(&self.digital) {
                let spr = s.samples_per_record;
                for &d in &samples[r * spr..(r + 1) * spr] {
                    out.extend_from_slice(&d.to_le_bytes());
                }
            }
        }
        Ok(out)
    }
}

fn fmt_number(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 8 {
        return s;
    }
    (0..8)
        .rev()
        .map(|p| format!("{v:.p$}"))
        .find(|s| s.len() <= 8)
        .unwrap_or(s)
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) -> Result<()> {
    if !text.is_ascii() || text.len() > width {
        return Err(Error::Format(format!(
            "header field {text:?} does not fit {width} ASCII bytes"
        )));
    }
    out.extend_from_slice(text.as_bytes());
    out.resize(out.len() + width - text.len(), b' ');
    Ok(())
}

/// Read an EDF file into a [`Recording`].
pub fn read_edf(path: &Path) -> Result<Recording> {
    parse_edf(&fs::read(path)?)?.to_recording()
}

/// Write a recording as EDF with `record_duration`-second data records.
pub fn write_edf(path: &Path, rec: &Recording, record_duration: f64) -> Result<()> {
    let bytes = EdfFile::from_recording(rec, record_duration)?.encode()?;
    super::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built single-signal file, independent of `encode`.
    fn hand_file(
        digital: &[i16],
        dmin: &str,
        dmax: &str,
        pmin: &str,
        pmax: &str,
        records: &str,
    ) -> Vec<u8> {
        let mut b = Vec::new();
        let mut pad = |s: &str, w: usize| {
            let mut f = s.as_bytes().to_vec();
            f.resize(w, b' ');
            b.extend_from_slice(&f);
        };
        pad("0", 8);
        pad("", 80);
        pad("", 80);
        pad("01.01.01", 8);
        pad("00.00.00", 8);
        pad("512", 8);
        pad("", 44);
        pad(records, 8);
        pad("1", 8);
        pad("1", 4);
        pad("EEG F3-M2", 16);
        pad("", 80);
        pad("uV", 8);
        pad(pmin, 8);
        pad(pmax, 8);
        pad(dmin, 8);
        pad(dmax, 8);
        pad("", 80);
        pad(&digital.len().to_string(), 8);
        pad("", 32);
        for d in digital {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn calibration_map_by_hand() {
        let bytes = hand_file(
            &[0, 100, -100, 32767],
            "-32768",
            "32767",
            "-3276.8",
            "3276.7",
            "1",
        );
        assert_eq!(bytes.len(), 512 + 8);
        let rec = parse_edf(&bytes).unwrap().to_recording().unwrap();
        assert_eq!(rec.channel_names, vec!["EEG F3-M2"]);
        assert_eq!(rec.fs, 4.0);
        // physical = (d + 32768) * 6553.5 / 65535 - 3276.8
        let expected = [0.0, 10.0, -10.0, 3276.7];
        for (got, want) in rec.data.row(0).iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_digital_range() {
        let bytes = hand_file(&[1, 2], "5", "5", "-1", "1", "1");
        let err = parse_edf(&bytes).unwrap().to_recording().unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }));
    }

    #[test]
    fn missing_data_section() {
        let mut bytes = hand_file(&[1, 2, 3, 4], "-32768", "32767", "-1", "1", "1");
        bytes.truncate(512);
        match parse_edf(&bytes).unwrap_err() {
            Error::Truncated {
                expected, actual, ..
            } => assert_eq!((expected, actual), (8, 0)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_offset() {
        let bytes = hand_file(&[1], "-32768", "32767", "abc", "1", "1");
        match parse_edf(&bytes).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 256 + 16 + 80 + 8),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_record_count_inferred() {
        let bytes = hand_file(&[1, 2, 3, 4], "-32768", "32767", "-1", "1", "-1");
        let edf = parse_edf(&bytes).unwrap();
        assert_eq!(edf.n_records, 1);
    }

    #[test]
    fn annotations_skipped() {
        let rec = Recording::new(
            vec!["C3".into(), ANNOTATION_LABEL.into()],
            10.0,
            Array2::from_shape_fn((2, 20), |(c, t)| (c * 100 + t) as f64),
        )
        .unwrap();
        let edf = EdfFile::from_recording(&rec, 1.0).unwrap();
        let back = parse_edf(&edf.encode().unwrap())
            .unwrap()
            .to_recording()
            .unwrap();
        assert_eq!(back.channel_names, vec!["C3"]);
        assert_eq!(back.n_samples(), 20);
    }

    #[test]
    fn mixed_rates_keep_majority() {
        let mut edf = EdfFile::from_recording(
            &Recording::new(
                vec!["a".into(), "b".into(), "c".into()],
                4.0,
                Array2::zeros((3, 8)),
            )
            .unwrap(),
            1.0,
        )
        .unwrap();
        edf.signals[2].samples_per_record = 2;
        edf.digital[2].truncate(4);
        let back = parse_edf(&edf.encode().unwrap())
            .unwrap()
            .to_recording()
            .unwrap();
        assert_eq!(back.channel_names, vec!["a", "b"]);
    }
}
