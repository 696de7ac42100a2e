//! Input discovery and loading.

use std::path::{Path, PathBuf};

use microstate::io::{read_recording, Recording};
use microstate::UNSCORED;

use crate::{CliError, Stage};

const EXTENSIONS: [&str; 4] = ["edf", "msr", "csv", "txt"];

fn is_recording(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Expand files, directories (one level) and glob patterns into a sorted,
/// deduplicated list of recording paths.
pub fn resolve_inputs(inputs: &[String]) -> Result<Vec<PathBuf>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("no inputs given".into()));
    }
    let mut found = Vec::new();
    for item in inputs {
        let path = Path::new(item);
        if path.is_dir() {
            let entries =
                std::fs::read_dir(path).map_err(|e| CliError::Input(format!("{item}: {e}")))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_recording(p))
                .collect();
            if files.is_empty() {
                return Err(CliError::Input(format!(
                    "{item}: no recordings in directory"
                )));
            }
            found.append(&mut files);
        } else if path.exists() {
            found.push(path.to_path_buf());
        } else if item.contains(['*', '?', '[']) {
            let paths = glob::glob(item).map_err(|e| CliError::Input(format!("{item}: {e}")))?;
            let mut files: Vec<PathBuf> = paths
                .filter_map(|p| p.ok())
                .filter(|p| is_recording(p))
                .collect();
            if files.is_empty() {
                return Err(CliError::Input(format!(
                    "{item}: pattern matched no recordings"
                )));
            }
            found.append(&mut files);
        } else {
            return Err(CliError::Input(format!(
                "{item}: no such file or directory"
            )));
        }
    }
    found.sort();
    found.dedup();
    Ok(found)
}

/// Recording id: the file stem.
pub fn recording_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Ids must be unique since they name output files.
pub fn check_unique_ids(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut ids: Vec<String> = paths.iter().map(|p| recording_id(p)).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Input(format!(
            "two inputs share the recording id {:?}",
            w[0]
        )));
    }
    Ok(())
}

fn parse_stage(s: &str) -> Option<u32> {
    match s.to_ascii_uppercase().as_str() {
        "W" | "WAKE" => Some(0),
        "N1" | "S1" => Some(1),
        "N2" | "S2" => Some(2),
        "N3" | "N4" | "S3" | "S4" => Some(3),
        "R" | "REM" => Some(4),
        "?" | "-1" | "UNSCORED" => Some(UNSCORED),
        other => other.parse().ok(),
    }
}

/// Labels from `<stem>.labels` next to the recording, one per line.
fn read_sidecar(path: &Path) -> Result<Option<Vec<u32>>, CliError> {
    let side = path.with_extension("labels");
    if !side.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side)
        .map_err(|e| CliError::Input(format!("{}: {e}", side.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            parse_stage(l).ok_or_else(|| {
                CliError::Input(format!(
                    "{}: line {}: bad label {l:?}",
                    side.display(),
                    i + 1
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Read a recording and attach sidecar labels when it carries none.
pub fn load_recording(
    path: &Path,
    csv_fs: Option<f64>,
    label_rate: f64,
) -> Result<Recording, CliError> {
    let rec = read_recording(path, csv_fs)
        .map_err(|e| CliError::stage(Stage::Ingest, e).context(path))?;
    if rec.labels.is_some() {
        return Ok(rec);
    }
    match read_sidecar(path)? {
        Some(labels) => rec
            .with_labels(labels, label_rate)
            .map_err(|e| CliError::stage(Stage::Ingest, e).context(path)),
        None => Ok(rec),
    }
}
