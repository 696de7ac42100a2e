//! Microstate distribution statistics, a softmax classifier trained on the
//! cross-entropy loss, and accuracy / Cohen's kappa evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tokenize::LabeledWindow;

/// Relative frequency of each id in `0..k`. Padding (`k`) is skipped; an
/// input with no real tokens yields the zero vector.
pub fn microstate_histogram(tokens: &[u32], k: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; k];
    let mut total = 0u64;
    for &t in tokens {
        match (t as usize).cmp(&k) {
            std::cmp::Ordering::Less => {
                counts[t as usize] += 1;
                total += 1;
            }
            std::cmp::Ordering::Equal => {}
            std::cmp::Ordering::Greater => return Err(Error::Range { token: t, k }),
        }
    }
    if total == 0 {
        return Ok(vec![0.0; k]);
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / total as f64)
        .collect())
}

/// Split a window into its label epochs: `(tokens of epoch, label)`.
pub fn window_epochs(window: &LabeledWindow) -> Vec<(&[u32], u32)> {
    let n = window.labels.len();
    if n == 0 {
        return Vec::new();
    }
    let per = window.tokens.len() / n;
    window
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (&window.tokens[i * per..(i + 1) * per], l))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub group_id: String,
    pub label: u32,
    pub counts: BTreeMap<u32, u64>,
    /// Ids by descending count, ties by ascending id.
    pub ranks: Vec<u32>,
}

impl RankTable {
    /// 1-based rank of `id`, if it occurred.
    pub fn rank_of(&self, id: u32) -> Option<usize> {
        self.ranks.iter().position(|&r| r == id).map(|p| p + 1)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Aggregate token spans per `(group, label)` and rank the ids in each.
/// Ids `≥ pad_id` are ignored.
pub fn rank_microstates<'a, I>(observations: I, pad_id: u32) -> Vec<RankTable>
where
    I: IntoIterator<Item = (&'a str, u32, &'a [u32])>,
{
    let mut acc: BTreeMap<(String, u32), BTreeMap<u32, u64>> = BTreeMap::new();
    for (group, label, tokens) in observations {
        let counts = acc.entry((group.to_string(), label)).or_default();
        for &t in tokens.iter().filter(|&&t| t < pad_id) {
            *counts.entry(t).or_default() += 1;
        }
    }
    acc.into_iter()
        .map(|((group_id, label), counts)| {
            let mut ranks: Vec<u32> = counts.keys().copied().collect();
            ranks.sort_by(|a, b| counts[b].cmp(&counts[a]).then(a.cmp(b)));
            RankTable {
                group_id,
                label,
                counts,
                ranks,
            }
        })
        .collect()
}

/// Aligned text: for each label, one row per microstate that is in the top
/// `top` of any group, one column per group holding its 1-based rank
/// (`-` when the id never occurred there).
pub fn format_rank_tables(
    tables: &[RankTable],
    top: usize,
    label_names: &dyn Fn(u32) -> String,
) -> String {
    let labels: BTreeSet<u32> = tables.iter().map(|t| t.label).collect();
    let mut out = String::new();
    for label in labels {
        let group: Vec<&RankTable> = tables.iter().filter(|t| t.label == label).collect();
        let ids: BTreeSet<u32> = group
            .iter()
            .flat_map(|t| t.ranks.iter().take(top).copied())
            .collect();
        let width = group
            .iter()
            .map(|t| t.group_id.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(
            out,
            "Rank among {} groups under {} (top {top})",
            group.len(),
            label_names(label)
        );
        let _ = write!(out, "{:>10}", "microstate");
        for t in &group {
            let _ = write!(out, " {:>width$}", t.group_id);
        }
        out.push('\n');
        for id in ids {
            let _ = write!(out, "{id:>10}");
            for t in &group {
                let cell = t.rank_of(id).map_or("-".to_string(), |r| r.to_string());
                let _ = write!(out, " {cell:>width$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Per-dimension z-score fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Data("cannot standardize an empty matrix".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("rows present");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

/// Multinomial logistic regression, `scores = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    /// `[classes × features]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

fn log_softmax(scores: ArrayView1<f64>) -> Array1<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.mapv(|s| s - lse)
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, features: usize) -> Self {
        SoftmaxModel {
            weights: Array2::zeros((classes, features)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// `[samples × classes]`
    pub fn scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut s = self.scores(x);
        for mut row in s.rows_mut() {
            let lp = log_softmax(row.view());
            row.assign(&lp.mapv(f64::exp));
        }
        s
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<u32> {
        self.scores(x)
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best as u32
            })
            .collect()
    }
}

/// Mean cross-entropy `−Σ_i p(i)·log softmax(h)_i` over samples (one-hot
/// `p`) with its gradient in `W` and `b`.
pub fn loss_and_gradient(
    model: &SoftmaxModel,
    x: ArrayView2<f64>,
    y: &[u32],
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let scores = model.scores(x);
    let mut loss = 0.0;
    let mut delta = Array2::zeros(scores.raw_dim());
    for (i, (row, &label)) in scores.rows().into_iter().zip(y).enumerate() {
        let lp = log_softmax(row);
        loss -= lp[label as usize];
        let mut d = delta.row_mut(i);
        d.assign(&lp.mapv(f64::exp));
        d[label as usize] -= 1.0;
    }
    let grad_w = delta.t().dot(&x) / n;
    let grad_b = delta.sum_axis(Axis(0)) / n;
    (loss / n, grad_w, grad_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
        }
    }
}

/// Full-batch gradient descent from a zero model. Returns the model and the
/// loss before each epoch plus the final loss.
pub fn train_softmax(
    x: ArrayView2<f64>,
    y: &[u32],
    classes: usize,
    config: &TrainConfig,
) -> Result<(SoftmaxModel, Vec<f64>)> {
    if x.nrows() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows, {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite feature".into()));
    }
    let mut seen = vec![false; classes];
    for &l in y {
        let slot = seen
            .get_mut(l as usize)
            .ok_or_else(|| Error::Data(format!("label {l} outside 0..{classes}")))?;
        *slot = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "class {missing} has no training samples"
        )));
    }
    let mut model = SoftmaxModel::zeros(classes, x.ncols());
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, gw, gb) = loss_and_gradient(&model, x, y);
        trace.push(loss);
        model.weights.scaled_add(-config.learning_rate, &gw);
        model.bias.scaled_add(-config.learning_rate, &gb);
    }
    trace.push(loss_and_gradient(&model, x, y).0);
    Ok((model, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub accuracy: f64,
    pub kappa: f64,
    /// Set when chance agreement is 1 and κ was assigned by convention.
    pub kappa_degenerate: bool,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub recall: Vec<Option<f64>>,
}

/// Accuracy, Cohen's kappa, confusion matrix and per-class recall.
pub fn agreement(truth: &[u32], predicted: &[u32], classes: usize) -> Result<Evaluation> {
    if truth.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} labels, {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= classes || p as usize >= classes {
            return Err(Error::Data(format!("class id outside 0..{classes}")));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let n = truth.len() as f64;
    let diag: u64 = (0..classes).map(|i| confusion[i][i]).sum();
    let p_o = diag as f64 / n;
    let p_e: f64 = (0..classes)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let degenerate = (1.0 - p_e).abs() < 1e-15;
    let kappa = if degenerate {
        if p_o == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    let recall = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect();
    Ok(Evaluation {
        n: truth.len(),
        accuracy: p_o,
        kappa,
        kappa_degenerate: degenerate,
        confusion,
        recall,
    })
}

pub fn evaluate(model: &SoftmaxModel, x: ArrayView2<f64>, y: &[u32]) -> Result<Evaluation> {
    if x.ncols() != model.weights.ncols() {
        return Err(Error::shape(format!(
            "model expects {} features, got {}",
            model.weights.ncols(),
            x.ncols()
        )));
    }
    agreement(y, &model.predict(x), model.classes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded 7:1:2 split of recording ids (deduplicated and sorted first).
pub fn split_recordings(ids: &[String], seed: u64) -> Split {
    let mut unique: Vec<String> = ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = unique.len();
    let n_train = (n as f64 * 0.7).round() as usize;
    let n_val = ((n as f64 * 0.1).round() as usize).min(n - n_train);
    let test = unique.split_off(n_train + n_val);
    let val = unique.split_off(n_train);
    Split {
        train: unique,
        val,
        test,
    }
}
