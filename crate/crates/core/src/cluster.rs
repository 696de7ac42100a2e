//! Streaming k-means over GFP-peak topographies.
//!
//! [`StreamingKMeans`] consumes one mini-batch per iteration. In
//! [`FitMode::Literal`] every center that receives points is replaced by the
//! centroid of exactly those points and centers with no points keep their
//! position, so nothing is remembered between batches. [`FitMode::Weighted`]
//! keeps a running count per center and moves it by `Σ(x − c) / count`, the
//! usual mini-batch recurrence, which converges on heterogeneous streams.
//!
//! [`batch_kmeans`] is plain Lloyd iteration and serves as the reference the
//! streaming engine must reproduce when each batch is the full data set.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    #[default]
    Literal,
    Weighted,
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::Literal => "literal",
            FitMode::Weighted => "weighted",
        })
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(FitMode::Literal),
            "weighted" => Ok(FitMode::Weighted),
            other => Err(Error::param(format!(
                "unknown fit mode {other:?} (literal|weighted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest center displacement, µV.
    pub tol: f64,
    pub mode: FitMode,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 1000,
            batch_size: 50,
            max_iter: 300,
            tol: 1e-4,
            mode: FitMode::Literal,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param(format!("k must be ≥ 2, got {}", self.k)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be ≥ 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// Rows buffered for k-means++ seeding: ten batches' worth per
    /// `ceil(k / n)` batches, never fewer than `k`.
    pub fn reservoir_size(&self) -> usize {
        (10 * self.k.div_ceil(self.batch_size) * self.batch_size).max(self.k)
    }
}

/// Fit metadata stored alongside the centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookMeta {
    pub channel_names: Vec<String>,
    pub fs: Option<f64>,
    pub filter_band: Option<[f64; 2]>,
    pub mode: FitMode,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub iterations: usize,
    pub final_shift: f64,
}

impl CodebookMeta {
    pub fn for_channels(channel_names: Vec<String>) -> Self {
        let cfg = FitConfig::default();
        CodebookMeta {
            channel_names,
            fs: None,
            filter_band: None,
            mode: cfg.mode,
            seed: cfg.seed,
            batch_size: cfg.batch_size,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
            iterations: 0,
            final_shift: 0.0,
        }
    }
}

/// `k` centroid topographies over `N` channels. Token `k` is reserved for padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Array2<f32>,
    pub meta: CodebookMeta,
}

impl Codebook {
    pub fn new(centroids: Array2<f32>, meta: CodebookMeta) -> Result<Self> {
        let (k, n) = centroids.dim();
        if k < 2 || n < 1 {
            return Err(Error::Contract(format!(
                "codebook needs k ≥ 2 and N ≥ 1, got {k}×{n}"
            )));
        }
        if meta.channel_names.len() != n {
            return Err(Error::shape(format!(
                "{} channel names for {n}-channel centroids",
                meta.channel_names.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(
                "codebook holds non-finite centroids".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(k);
        for (i, row) in centroids.rows().into_iter().enumerate() {
            let bits: Vec<u32> = row.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(bits) {
                return Err(Error::Contract(format!(
                    "centroid {i} duplicates an earlier row"
                )));
            }
        }
        Ok(Codebook { centroids, meta })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn pad_id(&self) -> u32 {
        self.k() as u32
    }

    pub fn centroids(&self) -> ArrayView2<'_, f32> {
        self.centroids.view()
    }

    pub fn centroids_f64(&self) -> Array2<f64> {
        self.centroids.mapv(f64::from)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.meta.channel_names
    }
}

#[inline]
fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: ArrayView2<f64>, point: ArrayView1<f64>) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (i, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (i as u32, d);
        }
    }
    best
}

/// Nearest-centroid labels (squared Euclidean, ties to the lowest index)
/// and the total squared distance.
pub fn assign(centroids: ArrayView2<f64>, points: ArrayView2<f64>) -> Result<(Vec<u32>, f64)> {
    if centroids.ncols() != points.ncols() {
        return Err(Error::shape(format!(
            "centroids have {} channels, points have {}",
            centroids.ncols(),
            points.ncols()
        )));
    }
    if centroids.nrows() == 0 {
        return Err(Error::shape("no centroids"));
    }
    let pairs: Vec<(u32, f64)> = if points.nrows() >= 4096 {
        points
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|p| nearest(centroids, p))
            .collect()
    } else {
        points
            .rows()
            .into_iter()
            .map(|p| nearest(centroids, p))
            .collect()
    };
    // sequential sum keeps the result independent of thread scheduling
    let inertia = pairs.iter().map(|&(_, d)| d).sum();
    Ok((pairs.into_iter().map(|(l, _)| l).collect(), inertia))
}

/// k-means++ seeding: first center uniform, each next one drawn with
/// probability proportional to its squared distance from the chosen set.
pub fn kmeanspp_init(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>> {
    let m = points.nrows();
    if m < k {
        return Err(Error::InsufficientData(format!(
            "{m} points cannot seed {k} centers"
        )));
    }
    if k == 0 {
        return Err(Error::param("k must be ≥ 1"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..m));
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InsufficientData(format!(
                "only {} distinct points, {k} centers requested",
                chosen.len()
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        chosen.push(pick);
        for (d, p) in d2.iter_mut().zip(points.rows()) {
            *d = d.min(sq_dist(p, points.row(pick)));
        }
    }
    Ok(points.select(Axis(0), &chosen))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    /// Inertia against the returned centers.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia at each assignment step.
    pub inertia_trace: Vec<f64>,
    pub converged: bool,
}

/// Lloyd's algorithm from `init_centers`. Stops after `max_iter` iterations
/// or once the largest center displacement drops below `tol`.
pub fn batch_kmeans(
    points: ArrayView2<f64>,
    k: usize,
    init_centers: ArrayView2<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if points.nrows() < k {
        return Err(Error::InsufficientData(format!(
            "{} points for k = {k}",
            points.nrows()
        )));
    }
    if init_centers.nrows() != k || init_centers.ncols() != points.ncols() {
        return Err(Error::shape(format!(
            "init centers are {:?}, expected ({k}, {})",
            init_centers.dim(),
            points.ncols()
        )));
    }
    let n = points.ncols();
    let mut centers = init_centers.to_owned();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter && !converged {
        let (labels, inertia) = assign(centers.view(), points)?;
        trace.push(inertia);
        let mut sums = Array2::<f64>::zeros((k, n));
        let mut counts = vec![0usize; k];
        for (p, &l) in points.rows().into_iter().zip(&labels) {
            let mut row = sums.row_mut(l as usize);
            row += &p;
            counts[l as usize] += 1;
        }
        let mut shift = 0.0f64;
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let new = sums.row(i).mapv(|s| s / count as f64);
            shift = shift.max(sq_dist(new.view(), centers.row(i)).sqrt());
            centers.row_mut(i).assign(&new);
        }
        iterations += 1;
        converged = shift < tol;
    }
    let (_, inertia) = assign(centers.view(), points)?;
    Ok(KMeansResult {
        centers,
        inertia,
        iterations,
        inertia_trace: trace,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStep {
    /// Inertia of the batch against the centers before the update.
    pub inertia: f64,
    /// Largest center displacement caused by the update.
    pub shift: f64,
}

/// Mini-batch k-means state.
#[derive(Debug, Clone)]
pub struct StreamingKMeans {
    centers: Array2<f64>,
    counts: Vec<u64>,
    mode: FitMode,
}

impl StreamingKMeans {
    pub fn new(init_centers: Array2<f64>, mode: FitMode) -> Self {
        let k = init_centers.nrows();
        StreamingKMeans {
            centers: init_centers,
            counts: vec![0; k],
            mode,
        }
    }

    pub fn centers(&self) -> ArrayView2<'_, f64> {
        self.centers.view()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn into_centers(self) -> Array2<f64> {
        self.centers
    }

    pub fn partial_fit(&mut self, batch: ArrayView2<f64>) -> Result<BatchStep> {
        let (k, n) = self.centers.dim();
        let (labels, inertia) = assign(self.centers.view(), batch)?;
        let mut sums = Array2::<f64>::zeros((k, n));
        let mut members = vec![0usize; k];
        for (p, &l) in batch.rows().into_iter().zip(&labels) {
            let mut row = sums.row_mut(l as usize);
            match self.mode {
                FitMode::Literal => row += &p,
                FitMode::Weighted => {
                    row.zip_mut_with(&(&p - &self.centers.row(l as usize)), |s, d| *s += d)
                }
            }
            members[l as usize] += 1;
        }
        let mut shift = 0.0f64;
        for (i, &count) in members.iter().enumerate() {
            if count == 0 {
                continue;
            }
            self.counts[i] += count as u64;
            let new = match self.mode {
                FitMode::Literal => sums.row(i).mapv(|s| s / count as f64),
                FitMode::Weighted => {
                    let total = self.counts[i] as f64;
                    &self.centers.row(i) + &sums.row(i).mapv(|s| s / total)
                }
            };
            shift = shift.max(sq_dist(new.view(), self.centers.row(i)).sqrt());
            self.centers.row_mut(i).assign(&new);
        }
        Ok(BatchStep { inertia, shift })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub final_shift: f64,
    pub converged: bool,
    pub reservoir_rows: usize,
    pub inertia_trace: Vec<f64>,
    pub shift_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StreamingFit {
    pub centers: Array2<f64>,
    pub report: FitReport,
}

impl StreamingFit {
    /// Freeze the fitted centers as an `f32` codebook.
    pub fn into_codebook(self, channel_names: Vec<String>, config: &FitConfig) -> Result<Codebook> {
        let mut meta = CodebookMeta::for_channels(channel_names);
        meta.mode = config.mode;
        meta.seed = config.seed;
        meta.batch_size = config.batch_size;
        meta.max_iter = config.max_iter;
        meta.tol = config.tol;
        meta.iterations = self.report.iterations;
        meta.final_shift = self.report.final_shift;
        Codebook::new(self.centers.mapv(|v| v as f32), meta)
    }
}

fn run<I>(
    engine: &mut StreamingKMeans,
    batches: I,
    config: &FitConfig,
    width: usize,
) -> Result<FitReport>
where
    I: IntoIterator<Item = Array2<f64>>,
{
    let mut report = FitReport {
        iterations: 0,
        final_shift: f64::INFINITY,
        converged: false,
        reservoir_rows: 0,
        inertia_trace: Vec::new(),
        shift_trace: Vec::new(),
    };
    for batch in batches {
        if report.iterations >= config.max_iter || report.converged {
            break;
        }
        if batch.ncols() != width {
            return Err(Error::shape(format!(
                "batch width {} != {width}",
                batch.ncols()
            )));
        }
        if batch.nrows() == 0 {
            continue;
        }
        let step = engine.partial_fit(batch.view())?;
        report.iterations += 1;
        report.final_shift = step.shift;
        report.inertia_trace.push(step.inertia);
        report.shift_trace.push(step.shift);
        report.converged = step.shift < config.tol;
    }
    if report.iterations == 0 {
        return Err(Error::InsufficientData("stream produced no batches".into()));
    }
    Ok(report)
}

/// Streaming fit from explicit initial centers: one batch per iteration.
pub fn streaming_fit_from<I>(
    init_centers: Array2<f64>,
    stream: I,
    config: &FitConfig,
) -> Result<StreamingFit>
where
    I: IntoIterator<Item = Array2<f64>>,
{
    config.validate()?;
    if init_centers.nrows() != config.k {
        return Err(Error::shape(format!(
            "{} initial centers for k = {}",
            init_centers.nrows(),
            config.k
        )));
    }
    let width = init_centers.ncols();
    let mut engine = StreamingKMeans::new(init_centers, config.mode);
    let report = run(&mut engine, stream, config, width)?;
    Ok(StreamingFit {
        centers: engine.into_centers(),
        report,
    })
}

/// Streaming fit with k-means++ seeding.
///
/// Batches are buffered until [`FitConfig::reservoir_size`] rows are held
/// (or the stream ends), k-means++ seeds the centers from that reservoir,
/// and the buffered batches are then replayed ahead of the rest of the
/// stream.
pub fn streaming_fit<I>(stream: I, config: &FitConfig) -> Result<StreamingFit>
where
    I: IntoIterator<Item = Array2<f64>>,
{
    config.validate()?;
    let mut stream = stream.into_iter();
    let target = config.reservoir_size();
    let mut buffered: Vec<Array2<f64>> = Vec::new();
    let mut rows = 0;
    let mut width = None;
    while rows < target {
        let Some(batch) = stream.next() else { break };
        match width {
            None => width = Some(batch.ncols()),
            Some(w) if w != batch.ncols() => {
                return Err(Error::shape(format!(
                    "batch width {} != {w}",
                    batch.ncols()
                )))
            }
            _ => {}
        }
        rows += batch.nrows();
        buffered.push(batch);
    }
    let Some(width) = width else {
        return Err(Error::InsufficientData("empty stream".into()));
    };
    let mut reservoir = Array2::zeros((0, width));
    for b in &buffered {
        reservoir
            .append(Axis(0), b.view())
            .map_err(|e| Error::shape(e.to_string()))?;
    }
    let init = kmeanspp_init(reservoir.view(), config.k, config.seed)?;
    let mut engine = StreamingKMeans::new(init, config.mode);
    let mut report = run(
        &mut engine,
        buffered.into_iter().chain(stream),
        config,
        width,
    )?;
    report.reservoir_rows = rows;
    Ok(StreamingFit {
        centers: engine.into_centers(),
        report,
    })
}
