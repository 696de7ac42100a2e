//! Stage glue shared by the command line tool, the Python module and the
//! end-to-end tests: preparation, peak harvesting, codebook fitting and
//! per-epoch feature tables.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    evaluate, microstate_histogram, split_recordings, train_softmax, window_epochs, Evaluation,
    Split, Standardizer, TrainConfig,
};
use crate::cluster::{streaming_fit, Codebook, FitConfig, FitReport};
use crate::error::{Error, Result};
use crate::gfp::peak_maps;
use crate::io::Recording;
use crate::prep::{bandpass, resample, select_channels, MultichannelSignal};
use crate::spectral::{frequency_features, Band, PowerScaling};
use crate::tokenize::{slice_windows, tokenize, LabeledWindow};
use crate::DEFAULT_CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub channels: Vec<String>,
    /// Passband edges in Hz.
    pub band: [f64; 2],
    pub target_fs: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            channels: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            band: [1.0, 40.0],
            target_fs: 100.0,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band;
        if self.channels.len() < 2 {
            return Err(Error::param("need at least two channels"));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::param(format!("bad filter band [{lo}, {hi}]")));
        }
        if !(self.target_fs > 2.0 * hi) {
            return Err(Error::param(format!(
                "target rate {} Hz cannot hold a {hi} Hz band",
                self.target_fs
            )));
        }
        Ok(())
    }
}

/// Select, bandpass, resample.
pub fn preprocess(rec: &Recording, config: &PrepConfig) -> Result<MultichannelSignal> {
    let sig = select_channels(rec, &config.channels)?;
    let sig = bandpass(&sig, config.band[0], config.band[1])?;
    resample(&sig, config.target_fs)
}

/// GFP-peak maps of every signal stacked in input order, `[peaks × N]`.
pub fn collect_peak_maps(signals: &[MultichannelSignal]) -> Result<Array2<f64>> {
    let width = signals
        .first()
        .ok_or_else(|| Error::InsufficientData("no signals".into()))?
        .n_channels();
    let mut all = Array2::zeros((0, width));
    for s in signals {
        let maps = peak_maps(s)?;
        all.append(Axis(0), maps.view())
            .map_err(|e| Error::shape(format!("peak maps: {e}")))?;
    }
    Ok(all)
}

/// Seeded row shuffle cut into batches of `batch_size` rows. The last batch
/// may be short.
pub fn shuffled_batches(points: &Array2<f64>, batch_size: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut order: Vec<usize> = (0..points.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size.max(1))
        .map(|idx| points.select(Axis(0), idx))
        .collect()
}

/// Fit a codebook on the GFP peaks of already prepared signals.
pub fn fit_codebook(
    signals: &[MultichannelSignal],
    prep: &PrepConfig,
    fit: &FitConfig,
) -> Result<(Codebook, FitReport)> {
    let maps = collect_peak_maps(signals)?;
    fit_peak_maps(&maps, signals[0].channel_names.clone(), prep, fit)
}

/// Fit a codebook on stacked peak maps `[peaks × N]`: seeded shuffle,
/// batches of `fit.batch_size`, streaming k-means.
pub fn fit_peak_maps(
    maps: &Array2<f64>,
    channel_names: Vec<String>,
    prep: &PrepConfig,
    fit: &FitConfig,
) -> Result<(Codebook, FitReport)> {
    fit.validate()?;
    if maps.nrows() < fit.k {
        return Err(Error::InsufficientData(format!(
            "{} GFP peaks for k = {}",
            maps.nrows(),
            fit.k
        )));
    }
    let result = streaming_fit(shuffled_batches(maps, fit.batch_size, fit.seed), fit)?;
    let report = result.report.clone();
    let mut codebook = result.into_codebook(channel_names, fit)?;
    codebook.meta.fs = Some(prep.target_fs);
    codebook.meta.filter_band = Some(prep.band);
    Ok((codebook, report))
}

/// Tokenize one prepared signal and cut labeled windows.
pub fn token_windows(
    codebook: &Codebook,
    signal: &MultichannelSignal,
    window_s: f64,
    subject_id: &str,
) -> Result<Vec<LabeledWindow>> {
    let (Some(labels), Some(rate)) = (&signal.labels, signal.label_rate) else {
        return Err(Error::Contract(format!(
            "{subject_id}: recording has no labels"
        )));
    };
    let seq = tokenize(codebook, signal)?;
    slice_windows(&seq.tokens, labels, seq.fs, rate, window_s, subject_id)
}

/// One row per labeled epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTable {
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    pub groups: Vec<String>,
}

impl EpochTable {
    pub fn empty(dim: usize) -> Self {
        EpochTable {
            features: Array2::zeros((0, dim)),
            labels: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows whose group is in `keep`.
    pub fn subset(&self, keep: &[String]) -> EpochTable {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains(&self.groups[i]))
            .collect();
        EpochTable {
            features: self.features.select(Axis(0), &idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    fn push(&mut self, row: &[f64], label: u32, group: &str) -> Result<()> {
        self.features
            .push_row(ndarray::ArrayView1::from(row))
            .map_err(|e| Error::shape(format!("feature row: {e}")))?;
        self.labels.push(label);
        self.groups.push(group.to_string());
        Ok(())
    }
}

/// Microstate histogram of every label epoch.
pub fn histogram_epochs(windows: &[LabeledWindow], k: usize) -> Result<EpochTable> {
    let mut table = EpochTable::empty(k);
    for w in windows {
        for (tokens, label) in window_epochs(w) {
            table.push(&microstate_histogram(tokens, k)?, label, &w.subject_id)?;
        }
    }
    Ok(table)
}

/// Mean band power per channel and band over each label epoch, `N·B`
/// columns, channel-major.
pub fn band_power_epochs(
    signal: &MultichannelSignal,
    t_w: f64,
    bands: &[Band],
    subject_id: &str,
) -> Result<EpochTable> {
    let (Some(labels), Some(rate)) = (&signal.labels, signal.label_rate) else {
        return Err(Error::Contract(format!(
            "{subject_id}: recording has no labels"
        )));
    };
    let per = (signal.fs / rate).round() as usize;
    let n_ch = signal.n_channels();
    let mut table = EpochTable::empty(n_ch * bands.len());
    for (e, &label) in labels.iter().enumerate() {
        if label == crate::UNSCORED || (e + 1) * per > signal.n_samples() {
            continue;
        }
        let part = MultichannelSignal::new(
            signal.channel_names.clone(),
            signal.fs,
            signal
                .data
                .slice(ndarray::s![.., e * per..(e + 1) * per])
                .to_owned(),
        )?;
        let feats = frequency_features(&part, t_w, 0.0, bands, PowerScaling::Angular)?;
        let frames = feats.ncols() / bands.len();
        let row: Vec<f64> = feats
            .axis_iter(Axis(0))
            .flat_map(|ch| {
                (0..bands.len())
                    .map(|b| {
                        ch.slice(ndarray::s![b * frames..(b + 1) * frames])
                            .mean()
                            .unwrap_or(0.0)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        table.push(&row, label, subject_id)?;
    }
    Ok(table)
}

/// Outcome of a seeded split, standardize, train, test run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Original label of each class index.
    pub classes: Vec<u32>,
    pub split: Split,
    pub train_epochs: usize,
    pub test_epochs: usize,
    pub final_loss: f64,
    pub test: Evaluation,
    pub validation: Option<Evaluation>,
}

/// Split recordings 7:1:2, z-score on the training rows, fit the softmax
/// model and score validation and test rows. Class indices follow the
/// sorted set of training labels.
pub fn split_and_evaluate(
    table: &EpochTable,
    seed: u64,
    train: &TrainConfig,
) -> Result<EvalReport> {
    let split = split_recordings(&table.groups, seed);
    let tr = table.subset(&split.train);
    let te = table.subset(&split.test);
    if tr.is_empty() || te.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} recordings are too few for a train/test split",
            split.train.len() + split.val.len() + split.test.len()
        )));
    }
    let mut classes: Vec<u32> = tr.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let dense = |labels: &[u32]| -> Result<Vec<u32>> {
        labels
            .iter()
            .map(|l| {
                classes
                    .binary_search(l)
                    .map(|i| i as u32)
                    .map_err(|_| Error::Data(format!("label {l} never seen in training")))
            })
            .collect()
    };
    let scaler = Standardizer::fit(tr.features.view())?;
    let (model, trace) = train_softmax(
        scaler.transform(tr.features.view()).view(),
        &dense(&tr.labels)?,
        classes.len(),
        train,
    )?;
    let test = evaluate(
        &model,
        scaler.transform(te.features.view()).view(),
        &dense(&te.labels)?,
    )?;
    let va = table.subset(&split.val);
    let validation = if va.is_empty() {
        None
    } else {
        Some(evaluate(
            &model,
            scaler.transform(va.features.view()).view(),
            &dense(&va.labels)?,
        )?)
    };
    Ok(EvalReport {
        classes,
        train_epochs: tr.len(),
        test_epochs: te.len(),
        final_loss: *trace.last().unwrap_or(&f64::NAN),
        split,
        test,
        validation,
    })
}
