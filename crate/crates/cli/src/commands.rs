//! Subcommand bodies. Each one reads its inputs, writes every output
//! atomically under `cfg.out`, and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use microstate::analytics::{format_rank_tables, rank_microstates, window_epochs};
use microstate::cluster::FitReport;
use microstate::dataset::{
    format_feature_file, format_index, format_token_file, read_feature_file, read_index,
    read_token_file, DatasetHeader, DatasetKind, FeatureWindow, IndexEntry, INDEX_FILE,
};
use microstate::gfp::peak_maps;
use microstate::io::{
    read_codebook, write_atomic, write_codebook, write_csv, write_edf, write_raw, Recording,
};
use microstate::pipeline::{
    fit_peak_maps, histogram_epochs, preprocess, split_and_evaluate, EpochTable, EvalReport,
};
use microstate::prep::MultichannelSignal;
use microstate::spectral::frequency_features;
use microstate::synth::{generate, SynthSpec, SynthStage};
use microstate::tokenize::{slice_windows, tokenize as tokenize_signal, LabeledWindow};
use microstate::{Codebook, UNSCORED};
use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FeatureKind, PipelineConfig};
use crate::inputs::{check_unique_ids, load_recording, recording_id, resolve_inputs};
use crate::{CliError, Stage, StageExt, SynthFormat};

pub const CODEBOOK_FILE: &str = "codebook.mscb";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const TOKENS_DIR: &str = "tokens";
pub const FEATURES_DIR: &str = "features";
pub const RANKS_FILE: &str = "ranks.txt";
pub const EVAL_FILE: &str = "eval.json";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::stage(Stage::Write, e.into()).context(dir))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::stage(Stage::Write, e).context(path))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Invariant {
        stage: Stage::Write,
        message: e.to_string(),
    })?;
    v.push(b'\n');
    Ok(v)
}

/// Record the resolved configuration next to the outputs.
fn write_run_config(cfg: &PipelineConfig, command: &str) -> Result<(), CliError> {
    let text = toml::to_string(cfg).map_err(|e| CliError::Invariant {
        stage: Stage::Write,
        message: e.to_string(),
    })?;
    write_out(
        &cfg.out.join(format!("{command}.config.toml")),
        text.as_bytes(),
    )
}

fn prepared(path: &Path, cfg: &PipelineConfig) -> Result<MultichannelSignal, CliError> {
    let rec = load_recording(path, cfg.csv_fs, cfg.label_rate)?;
    preprocess(&rec, &cfg.prep).map_err(|e| CliError::stage(Stage::Prep, e).context(path))
}

fn input_paths(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let paths = resolve_inputs(&cfg.inputs)?;
    check_unique_ids(&paths)?;
    Ok(paths)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub recordings: usize,
    pub peaks: usize,
    pub k: usize,
    pub batch_size: usize,
    pub mode: microstate::FitMode,
    pub seed: u64,
    #[serde(flatten)]
    pub report: FitReport,
}

/// ingest → prep → GFP peaks → streaming k-means → codebook + report.
pub fn fit(cfg: &PipelineConfig) -> Result<FitSummary, CliError> {
    let paths = input_paths(cfg)?;
    let per_file: Vec<Array2<f64>> = paths
        .par_iter()
        .map(|p| {
            let sig = prepared(p, cfg)?;
            peak_maps(&sig).map_err(|e| CliError::stage(Stage::Gfp, e).context(p))
        })
        .collect::<Result<_, _>>()?;
    let views: Vec<_> = per_file.iter().map(|m| m.view()).collect();
    let maps = ndarray::concatenate(Axis(0), &views).map_err(|e| CliError::Invariant {
        stage: Stage::Gfp,
        message: e.to_string(),
    })?;
    let fit = cfg.fit_config();
    let (codebook, report) =
        fit_peak_maps(&maps, cfg.prep.channels.clone(), &cfg.prep, &fit).at(Stage::Cluster)?;
    ensure_dir(&cfg.out)?;
    write_codebook(&codebook, &cfg.out.join(CODEBOOK_FILE))
        .map_err(|e| CliError::stage(Stage::Write, e))?;
    let summary = FitSummary {
        recordings: paths.len(),
        peaks: maps.nrows(),
        k: fit.k,
        batch_size: fit.batch_size,
        mode: fit.mode,
        seed: fit.seed,
        report,
    };
    write_out(&cfg.out.join(FIT_REPORT_FILE), &to_json(&summary)?)?;
    write_run_config(cfg, "fit")?;
    Ok(summary)
}

/// Windows of `window_s` seconds. Unlabeled signals give windows with no
/// labels.
fn windows_for(
    tokens: &[u32],
    sig: &MultichannelSignal,
    cfg: &PipelineConfig,
    id: &str,
) -> microstate::Result<Vec<LabeledWindow>> {
    match (&sig.labels, sig.label_rate) {
        (Some(labels), Some(rate)) => slice_windows(tokens, labels, sig.fs, rate, cfg.window_s, id),
        _ => {
            let per = (sig.fs * cfg.window_s).round() as usize;
            Ok(tokens
                .chunks_exact(per.max(1))
                .enumerate()
                .map(|(i, t)| LabeledWindow {
                    tokens: t.to_vec(),
                    labels: Vec::new(),
                    window_index: i,
                    subject_id: id.to_string(),
                })
                .collect())
        }
    }
}

fn check_codebook(codebook: &Codebook, cfg: &PipelineConfig) -> Result<(), CliError> {
    if let Some(fs) = codebook.meta.fs {
        if fs != cfg.prep.target_fs {
            return Err(CliError::stage(
                Stage::Tokenize,
                microstate::Error::Contract(format!(
                    "codebook was fitted at {fs} Hz, pipeline runs at {} Hz",
                    cfg.prep.target_fs
                )),
            ));
        }
    }
    Ok(())
}

/// Every token must be a real centroid id.
fn validate_tokens(windows: &[LabeledWindow], k: usize, id: &str) -> Result<(), CliError> {
    for w in windows {
        if let Some(&t) = w.tokens.iter().find(|&&t| t as usize >= k) {
            return Err(CliError::Invariant {
                stage: Stage::Tokenize,
                message: format!(
                    "{id}: window {} holds token {t} with k = {k}",
                    w.window_index
                ),
            });
        }
    }
    Ok(())
}

/// One token file per recording plus an index.
pub fn tokenize(cfg: &PipelineConfig, codebook_path: &Path) -> Result<Vec<IndexEntry>, CliError> {
    let paths = input_paths(cfg)?;
    let codebook = read_codebook(codebook_path)
        .map_err(|e| CliError::stage(Stage::Ingest, e).context(codebook_path))?;
    check_codebook(&codebook, cfg)?;
    let dir = cfg.out.join(TOKENS_DIR);
    ensure_dir(&dir)?;
    let entries: Vec<IndexEntry> = paths
        .par_iter()
        .map(|p| {
            let id = recording_id(p);
            let sig = prepared(p, cfg)?;
            let seq = tokenize_signal(&codebook, &sig)
                .map_err(|e| CliError::stage(Stage::Tokenize, e).context(p))?;
            let windows = windows_for(&seq.tokens, &sig, cfg, &id)
                .map_err(|e| CliError::stage(Stage::Tokenize, e).context(p))?;
            validate_tokens(&windows, codebook.k(), &id)?;
            let header = DatasetHeader {
                kind: DatasetKind::Tokens,
                subject_id: id.clone(),
                fs: sig.fs,
                label_rate: sig.label_rate.unwrap_or(cfg.label_rate),
                window_s: cfg.window_s,
                k: Some(codebook.k()),
                shape: None,
            };
            let file = format!("{id}.tsv");
            write_out(
                &dir.join(&file),
                format_token_file(&header, &windows).as_bytes(),
            )?;
            Ok(IndexEntry {
                file,
                subject_id: id,
                windows: windows.len(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    write_out(&dir.join(INDEX_FILE), format_index(&entries).as_bytes())?;
    write_run_config(cfg, "tokenize")?;
    Ok(entries)
}

/// Band-power matrices `[N × B·frames]` of every window.
pub fn window_features(
    sig: &MultichannelSignal,
    cfg: &PipelineConfig,
) -> microstate::Result<Vec<FeatureWindow>> {
    let per = (sig.fs * cfg.window_s).round() as usize;
    let n_windows = sig.n_samples().checked_div(per).unwrap_or(0);
    let per_labels = (cfg.window_s * sig.label_rate.unwrap_or(cfg.label_rate)).round() as usize;
    let f = &cfg.features;
    let mut out = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let labels = match &sig.labels {
            Some(l) => {
                let Some(span) = l.get(w * per_labels..(w + 1) * per_labels) else {
                    return Err(microstate::Error::Alignment(format!(
                        "window {w} needs labels up to {}, only {} given",
                        (w + 1) * per_labels,
                        l.len()
                    )));
                };
                if span.contains(&UNSCORED) {
                    continue;
                }
                span.to_vec()
            }
            None => Vec::new(),
        };
        let part = MultichannelSignal::new(
            sig.channel_names.clone(),
            sig.fs,
            sig.data.slice(s![.., w * per..(w + 1) * per]).to_owned(),
        )?;
        out.push(FeatureWindow {
            window_index: w,
            labels,
            values: frequency_features(&part, f.t_w, f.r_o, &f.bands, f.scaling)?,
        });
    }
    Ok(out)
}

pub fn features(cfg: &PipelineConfig) -> Result<Vec<IndexEntry>, CliError> {
    let paths = input_paths(cfg)?;
    let dir = cfg.out.join(FEATURES_DIR);
    ensure_dir(&dir)?;
    let entries: Vec<IndexEntry> = paths
        .par_iter()
        .map(|p| {
            let id = recording_id(p);
            let sig = prepared(p, cfg)?;
            let windows = window_features(&sig, cfg)
                .map_err(|e| CliError::stage(Stage::Features, e).context(p))?;
            let shape = windows
                .first()
                .map(|w| [w.values.nrows(), w.values.ncols()])
                .unwrap_or([sig.n_channels(), 0]);
            let header = DatasetHeader {
                kind: DatasetKind::Features,
                subject_id: id.clone(),
                fs: sig.fs,
                label_rate: sig.label_rate.unwrap_or(cfg.label_rate),
                window_s: cfg.window_s,
                k: None,
                shape: Some(shape),
            };
            let file = format!("{id}.tsv");
            write_out(
                &dir.join(&file),
                format_feature_file(&header, &windows).as_bytes(),
            )?;
            Ok(IndexEntry {
                file,
                subject_id: id,
                windows: windows.len(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    write_out(&dir.join(INDEX_FILE), format_index(&entries).as_bytes())?;
    write_run_config(cfg, "features")?;
    Ok(entries)
}

fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let index = read_index(dir)
        .map_err(|e| CliError::stage(Stage::Ingest, e).context(&dir.join(INDEX_FILE)))?;
    if index.is_empty() {
        return Err(CliError::Input(format!(
            "{}: dataset index lists no recordings",
            dir.display()
        )));
    }
    Ok(index.into_iter().map(|e| dir.join(e.file)).collect())
}

/// All windows of a token dataset and its codebook size.
pub fn load_token_dataset(dir: &Path) -> Result<(Vec<LabeledWindow>, usize), CliError> {
    let mut k = None;
    let mut all = Vec::new();
    for path in dataset_files(dir)? {
        let (header, mut windows) =
            read_token_file(&path).map_err(|e| CliError::stage(Stage::Ingest, e).context(&path))?;
        let hk = header
            .k
            .ok_or_else(|| CliError::Input(format!("{}: header has no k", path.display())))?;
        if *k.get_or_insert(hk) != hk {
            return Err(CliError::stage(
                Stage::Ingest,
                microstate::Error::Contract(format!(
                    "{}: k = {hk} differs from other files",
                    path.display()
                )),
            ));
        }
        all.append(&mut windows);
    }
    Ok((all, k.unwrap_or(0)))
}

pub fn label_name(label: u32) -> String {
    match label {
        0 => "W".into(),
        1 => "N1".into(),
        2 => "N2".into(),
        3 => "N3".into(),
        4 => "R".into(),
        UNSCORED => "?".into(),
        other => other.to_string(),
    }
}

/// Rank tables per (recording, label), written to `ranks.txt`.
pub fn stats(cfg: &PipelineConfig, dataset: &Path) -> Result<String, CliError> {
    let (windows, k) = load_token_dataset(dataset)?;
    let mut obs: Vec<(&str, u32, &[u32])> = Vec::new();
    for w in &windows {
        if w.labels.is_empty() {
            obs.push((&w.subject_id, UNSCORED, &w.tokens));
        } else {
            obs.extend(
                window_epochs(w)
                    .into_iter()
                    .map(|(t, l)| (w.subject_id.as_str(), l, t)),
            );
        }
    }
    let tables = rank_microstates(obs, k as u32);
    let text = format_rank_tables(&tables, cfg.stats.top, &label_name);
    ensure_dir(&cfg.out)?;
    write_out(&cfg.out.join(RANKS_FILE), text.as_bytes())?;
    Ok(text)
}

/// Per-epoch mean band power from window matrices, channel-major.
fn band_power_table(dir: &Path, n_bands: usize) -> Result<EpochTable, CliError> {
    let mut table: Option<EpochTable> = None;
    for path in dataset_files(dir)? {
        let (header, windows) = read_feature_file(&path)
            .map_err(|e| CliError::stage(Stage::Ingest, e).context(&path))?;
        for w in windows {
            let frames = w.values.ncols() / n_bands;
            let n_lab = w.labels.len();
            if n_lab == 0 || !frames.is_multiple_of(n_lab) {
                return Err(CliError::stage(
                    Stage::Eval,
                    microstate::Error::Alignment(format!(
                        "{}: window {} has {frames} frames for {n_lab} labels",
                        path.display(),
                        w.window_index
                    )),
                ));
            }
            let per = frames / n_lab;
            for (e, &label) in w.labels.iter().enumerate() {
                let row: Vec<f64> = w
                    .values
                    .axis_iter(Axis(0))
                    .flat_map(|ch| {
                        (0..n_bands)
                            .map(|b| {
                                let start = b * frames + e * per;
                                ch.slice(s![start..start + per]).mean().unwrap_or(0.0)
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let t = table.get_or_insert_with(|| EpochTable::empty(row.len()));
                t.features
                    .push_row(ndarray::ArrayView1::from(&row[..]))
                    .map_err(|e| {
                        CliError::stage(Stage::Eval, microstate::Error::Shape(e.to_string()))
                    })?;
                t.labels.push(label);
                t.groups.push(header.subject_id.clone());
            }
        }
    }
    table.ok_or_else(|| CliError::Input(format!("{}: no feature windows", dir.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub features: FeatureKind,
    pub seed: u64,
    pub class_names: Vec<String>,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Split by recording, train, score; `eval.json`.
pub fn eval(cfg: &PipelineConfig, dataset: &Path) -> Result<EvalSummary, CliError> {
    let table = match cfg.eval.features {
        FeatureKind::Histogram => {
            let (windows, k) = load_token_dataset(dataset)?;
            histogram_epochs(&windows, k).at(Stage::Eval)?
        }
        FeatureKind::Bandpower => band_power_table(dataset, cfg.features.bands.len())?,
    };
    let report = split_and_evaluate(&table, cfg.seed, &cfg.train_config()).at(Stage::Eval)?;
    let summary = EvalSummary {
        features: cfg.eval.features,
        seed: cfg.seed,
        class_names: report.classes.iter().map(|&c| label_name(c)).collect(),
        report,
    };
    ensure_dir(&cfg.out)?;
    write_out(&cfg.out.join(EVAL_FILE), &to_json(&summary)?)?;
    write_run_config(cfg, "eval")?;
    Ok(summary)
}

/// `synth_w_000.msr`, `synth_n3_000.msr`, ... with seeds derived from the
/// run seed.
#[allow(clippy::too_many_arguments)]
pub fn synth(
    cfg: &PipelineConfig,
    wake: usize,
    deep: usize,
    duration_s: f64,
    fs: f64,
    channels: usize,
    format: SynthFormat,
) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&cfg.out)?;
    let jobs: Vec<(SynthStage, usize)> = (0..wake)
        .map(|i| (SynthStage::Wake, i))
        .chain((0..deep).map(|i| (SynthStage::Deep, i)))
        .collect();
    jobs.par_iter()
        .map(|&(stage, i)| {
            let (tag, salt) = match stage {
                SynthStage::Wake => ("w", 0u64),
                SynthStage::Deep => ("n3", 1u64 << 32),
            };
            let spec = SynthSpec {
                stage,
                duration_s,
                fs,
                channels,
                seed: cfg.seed.wrapping_mul(1 << 40).wrapping_add(salt + i as u64),
            };
            let rec = generate(&spec).at(Stage::Synth)?;
            write_synth(&cfg.out, &format!("synth_{tag}_{i:03}"), &rec, format)
        })
        .collect()
}

fn write_synth(
    dir: &Path,
    stem: &str,
    rec: &Recording,
    format: SynthFormat,
) -> Result<PathBuf, CliError> {
    let path = match format {
        SynthFormat::Msr => dir.join(format!("{stem}.msr")),
        SynthFormat::Csv => dir.join(format!("{stem}.csv")),
        SynthFormat::Edf => dir.join(format!("{stem}.edf")),
    };
    let written = match format {
        SynthFormat::Msr => write_raw(&path, rec),
        SynthFormat::Csv => write_csv(&path, rec),
        SynthFormat::Edf => write_edf(&path, rec, 1.0),
    };
    written.map_err(|e| CliError::stage(Stage::Write, e).context(&path))?;
    // CSV and EDF carry no labels of their own
    if format != SynthFormat::Msr {
        if let Some(labels) = &rec.labels {
            let text: String = labels
                .iter()
                .map(|l| format!("{}\n", label_name(*l)))
                .collect();
            write_out(&path.with_extension("labels"), text.as_bytes())?;
        }
    }
    Ok(path)
}
