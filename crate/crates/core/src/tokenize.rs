//! Codebook application, window slicing, and padding.

use crate::cluster::{assign, Codebook};
use crate::error::{Error, Result};
use crate::prep::{normalize_channel_name, MultichannelSignal};
use crate::UNSCORED;

/// Microstate ids at signal rate. Ids lie in `0..=k`, `k` being padding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub fs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub tokens: Vec<u32>,
    pub labels: Vec<u32>,
    pub window_index: usize,
    pub subject_id: String,
}

/// Map every sample of `signal` to its nearest centroid.
pub fn tokenize(codebook: &Codebook, signal: &MultichannelSignal) -> Result<TokenSequence> {
    let want = codebook.channel_names();
    if want.len() != signal.n_channels() {
        return Err(Error::Contract(format!(
            "codebook expects {} channels, signal has {}",
            want.len(),
            signal.n_channels()
        )));
    }
    if let Some((i, (a, b))) = want
        .iter()
        .zip(&signal.channel_names)
        .enumerate()
        .find(|(_, (a, b))| normalize_channel_name(a) != normalize_channel_name(b))
    {
        return Err(Error::Contract(format!(
            "channel {i} is {b:?} in the signal but {a:?} in the codebook"
        )));
    }
    let centroids = codebook.centroids_f64();
    let (tokens, _) = assign(centroids.view(), signal.data.t())?;
    Ok(TokenSequence {
        tokens,
        fs: signal.fs,
    })
}

fn integral(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if r < 1.0 || (x - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::param(format!(
            "{what} = {x} is not a positive integer"
        )));
    }
    Ok(r as usize)
}

/// Consecutive non-overlapping windows of `window_s` seconds, both streams
/// anchored at sample 0. The trailing partial window is dropped, as is any
/// window holding an [`UNSCORED`] label.
pub fn slice_windows(
    tokens: &[u32],
    labels: &[u32],
    fs: f64,
    label_rate: f64,
    window_s: f64,
    subject_id: &str,
) -> Result<Vec<LabeledWindow>> {
    let per_tokens = integral(fs * window_s, "fs · T_w")?;
    let per_labels = integral(label_rate * window_s, "f_l · T_w")?;
    let n_windows = tokens.len() / per_tokens;
    if labels.len() < n_windows * per_labels {
        return Err(Error::Alignment(format!(
            "{n_windows} windows need {} labels, only {} given",
            n_windows * per_labels,
            labels.len()
        )));
    }
    Ok((0..n_windows)
        .filter_map(|w| {
            let labels = &labels[w * per_labels..(w + 1) * per_labels];
            if labels.contains(&UNSCORED) {
                return None;
            }
            Some(LabeledWindow {
                tokens: tokens[w * per_tokens..(w + 1) * per_tokens].to_vec(),
                labels: labels.to_vec(),
                window_index: w,
                subject_id: subject_id.to_string(),
            })
        })
        .collect())
}

/// One labeled event: token span start (inclusive) and its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub start: usize,
    pub label: u32,
}

/// Fixed-length windows starting at each event onset, one label per window.
/// Events whose window would run past the sequence are skipped.
pub fn slice_events(
    tokens: &[u32],
    events: &[Event],
    window_len: usize,
    subject_id: &str,
) -> Vec<LabeledWindow> {
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.start + window_len <= tokens.len())
        .map(|(i, e)| LabeledWindow {
            tokens: tokens[e.start..e.start + window_len].to_vec(),
            labels: vec![e.label],
            window_index: i,
            subject_id: subject_id.to_string(),
        })
        .collect()
}

/// Right-pad with `pad_id` up to `target_len`. Never truncates.
pub fn pad_tokens(tokens: &[u32], target_len: usize, pad_id: u32) -> Result<Vec<u32>> {
    if target_len < tokens.len() {
        return Err(Error::param(format!(
            "target length {target_len} shorter than sequence ({})",
            tokens.len()
        )));
    }
    let mut out = Vec::with_capacity(target_len);
    out.extend_from_slice(tokens);
    out.resize(target_len, pad_id);
    Ok(out)
}
