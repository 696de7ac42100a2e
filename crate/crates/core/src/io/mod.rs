//! Recording ingestion and codebook persistence.
//!
//! Supported inputs are a continuous-EDF subset ([`edf`]), delimited text
//! ([`csv`]) and the crate's own raw container ([`raw`]). Codebooks are
//! persisted by [`codebook`].

pub mod codebook;
pub mod csv;
pub mod edf;
pub mod raw;

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use self::codebook::{read_codebook, write_codebook};
pub use self::csv::{read_csv_recording, write_csv};
pub use self::edf::{read_edf, write_edf};
pub use self::raw::{read_raw, write_raw};

/// Raw multichannel recording, `data` is `[channels × samples]` in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channel_names: Vec<String>,
    pub fs: f64,
    pub data: Array2<f64>,
    pub labels: Option<Vec<u32>>,
    pub label_rate: Option<f64>,
}

impl Recording {
    pub fn new(channel_names: Vec<String>, fs: f64, data: Array2<f64>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::param(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if data.nrows() != channel_names.len() {
            return Err(Error::shape(format!(
                "{} data rows but {} channel names",
                data.nrows(),
                channel_names.len()
            )));
        }
        Ok(Recording {
            channel_names,
            fs,
            data,
            labels: None,
            label_rate: None,
        })
    }

    /// Attach a label stream sampled at `label_rate` Hz, anchored at sample 0.
    pub fn with_labels(mut self, labels: Vec<u32>, label_rate: f64) -> Result<Self> {
        if !(label_rate > 0.0 && label_rate.is_finite()) {
            return Err(Error::param(format!(
                "label rate must be positive, got {label_rate}"
            )));
        }
        let period = self.fs / label_rate;
        let covered = labels.len() as f64 * period;
        if covered > self.n_samples() as f64 + period + 1e-9 {
            return Err(Error::Alignment(format!(
                "{} labels at {label_rate} Hz span {covered} samples but recording has {}",
                labels.len(),
                self.n_samples()
            )));
        }
        self.labels = Some(labels);
        self.label_rate = Some(label_rate);
        Ok(self)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }
}

/// Dispatch on file extension: `.edf`, `.csv` (needs `csv_fs`), `.msr`.
pub fn read_recording(path: &Path, csv_fs: Option<f64>) -> Result<Recording> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "edf" => read_edf(path),
        "msr" => read_raw(path),
        "csv" | "txt" => {
            let fs = csv_fs.ok_or_else(|| {
                Error::param(format!(
                    "{}: csv input needs an explicit sampling rate",
                    path.display()
                ))
            })?;
            read_csv_recording(path, fs, None)
        }
        _ => Err(Error::Format(format!(
            "{}: unknown recording extension",
            path.display()
        ))),
    }
}

/// Write `bytes` to `path` through a temp file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}
