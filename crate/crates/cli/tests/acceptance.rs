//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use microstate::analytics::{agreement, loss_and_gradient, SoftmaxModel, TrainConfig};
use microstate::cluster::{assign, batch_kmeans, streaming_fit_from, CodebookMeta};
use microstate::gfp::{gfp_of, gfp_peaks};
use microstate::io::edf::{parse_edf, EdfFile};
use microstate::io::{codebook::decode_codebook, codebook::encode_codebook, read_recording};
use microstate::pipeline::{
    fit_codebook, histogram_epochs, preprocess, split_and_evaluate, token_windows, PrepConfig,
};
use microstate::prep::{bandpass, resample, MultichannelSignal};
use microstate::spectral::{
    band_power, default_bands, simpson, FrameLayout, PowerScaling, Spectrogram, Stft,
};
use microstate::tokenize::tokenize;
use microstate::{Codebook, FitConfig, FitMode};
use microstate_cli::commands;
use microstate_cli::{PipelineConfig, SynthFormat};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

// ---------------------------------------------------------------------------
// 1. streaming k-means with one full batch per iteration is Lloyd's algorithm

/// Textbook Lloyd: nearest center with ties to the lower index, means
/// summed in point order, empty clusters left in place, stop once the
/// largest move is below `tol`.
fn lloyd(
    points: &Array2<f64>,
    init: &Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> (Array2<f64>, usize) {
    let (k, n) = init.dim();
    let mut centers = init.clone();
    for it in 1..=max_iter {
        let mut sums = vec![vec![0.0; n]; k];
        let mut counts = vec![0usize; k];
        for p in points.rows() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let mut d = 0.0;
                for j in 0..n {
                    let diff = p[j] - centers[[c, j]];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            for j in 0..n {
                sums[best][j] += p[j];
            }
            counts[best] += 1;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut moved = 0.0;
            for j in 0..n {
                let new = sums[c][j] / counts[c] as f64;
                let diff = new - centers[[c, j]];
                moved += diff * diff;
                centers[[c, j]] = new;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < tol {
            return (centers, it);
        }
    }
    (centers, max_iter)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut total_iters = 0;
    for case in 0..100 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(k..=500);
        let points = random_matrix(&mut rng, m, n, 10.0);
        let picks: Vec<usize> = rand::seq::index::sample(&mut rng, m, k).into_vec();
        let init = points.select(Axis(0), &picks);
        let (max_iter, tol) = (50, 1e-9);
        let (want, iters) = lloyd(&points, &init, max_iter, tol);
        let config = FitConfig {
            k,
            batch_size: m,
            max_iter,
            tol,
            mode: FitMode::Literal,
            seed: 0,
        };
        let stream = std::iter::repeat_with(|| points.clone()).take(max_iter);
        let got = streaming_fit_from(init.clone(), stream, &config).map_err(|e| e.to_string())?;
        let lib = batch_kmeans(points.view(), k, init.view(), max_iter, tol)
            .map_err(|e| e.to_string())?;
        ensure(
            got.report.iterations == iters,
            format!(
                "case {case}: {} vs {iters} iterations",
                got.report.iterations
            ),
        )?;
        ensure(
            lib.iterations == iters,
            format!(
                "case {case}: batch {} vs {iters} iterations",
                lib.iterations
            ),
        )?;
        ensure(
            got.centers == want,
            format!("case {case}: streaming centers differ from Lloyd"),
        )?;
        ensure(
            lib.centers == want,
            format!("case {case}: batch centers differ from Lloyd"),
        )?;
        total_iters += iters;
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(10),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "100 instances, {total_iters} iterations, bit-identical, {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// 2. nearest-centroid assignment

fn exhaustive(centroids: &Array2<f64>, points: &Array2<f64>) -> Vec<u32> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let d: Vec<f64> = centroids
                .rows()
                .into_iter()
                .map(|c| (&c - &p).mapv(|v| v * v).sum())
                .collect();
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            d.iter().position(|&v| v == min).unwrap() as u32
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centroids = random_matrix(&mut rng, 50, 6, 20.0).mapv(|v| v as f32 as f64);
    let points = random_matrix(&mut rng, 1000, 6, 25.0);
    let want = exhaustive(&centroids, &points);
    let (got, _) = assign(centroids.view(), points.view()).map_err(|e| e.to_string())?;
    ensure(got == want, "assign disagrees with exhaustive search")?;

    let names: Vec<String> = microstate::DEFAULT_CHANNELS
        .iter()
        .map(|s| s.to_string())
        .collect();
    let codebook = Codebook::new(
        centroids.mapv(|v| v as f32),
        CodebookMeta::for_channels(names.clone()),
    )
    .map_err(|e| e.to_string())?;
    let signal =
        MultichannelSignal::new(names, 100.0, points.t().to_owned()).map_err(|e| e.to_string())?;
    let tokens = tokenize(&codebook, &signal).map_err(|e| e.to_string())?;
    ensure(
        tokens.tokens == want,
        "tokenize disagrees with exhaustive search",
    )?;
    Ok("1000 points x 50 centroids, exact".into())
}

// ---------------------------------------------------------------------------
// 3. GFP series and peaks

fn population_std(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// A sample is a peak iff it starts a run of equal values that is entered
/// from below and left downwards, with neither end at the series boundary.
fn brute_peaks(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    (1..n.saturating_sub(1))
        .filter(|&i| {
            if v[i - 1] >= v[i] {
                return false;
            }
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            j + 1 < n && v[j + 1] < v[i]
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = random_matrix(&mut rng, 6, 20_000, 50.0);
    let got = gfp_of(data.view()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (t, col) in data.columns().into_iter().enumerate() {
        worst = worst.max((got[t] - population_std(&col.to_vec())).abs());
    }
    ensure(worst <= 1e-12, format!("GFP error {worst:e}"))?;

    let n = 100_000;
    // coarse levels make plateaus common
    let coarse: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
    let mixed: Vec<f64> = (0..n)
        .map(|i| {
            if i % 7 < 3 {
                1.0
            } else {
                rng.random_range(0.0..2.0)
            }
        })
        .collect();
    let mut peaks = 0;
    for series in [&coarse, &mixed] {
        let want = brute_peaks(series);
        ensure(
            gfp_peaks(series) == want,
            "peak list differs from brute force",
        )?;
        peaks += want.len();
    }
    Ok(format!(
        "max GFP error {worst:.1e}; {peaks} peaks over 2 x 1e5 samples match"
    ))
}

// ---------------------------------------------------------------------------
// 4. Simpson quadrature and band ownership

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for points in (3..=201).step_by(2) {
        for degree in 0..=3 {
            let c: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = rng.random_range(-2.0..2.0);
            let h = rng.random_range(0.001..0.05);
            let b = a + h * (points - 1) as f64;
            let y: Vec<f64> = (0..points)
                .map(|i| {
                    let x = a + h * i as f64;
                    c.iter()
                        .enumerate()
                        .map(|(p, ci)| ci * x.powi(p as i32))
                        .sum()
                })
                .collect();
            let exact: f64 = c
                .iter()
                .enumerate()
                .map(|(p, ci)| ci * (b.powi(p as i32 + 1) - a.powi(p as i32 + 1)) / (p + 1) as f64)
                .sum();
            worst = worst.max((simpson(&y, h).map_err(|e| e.to_string())? - exact).abs());
        }
    }
    ensure(worst <= 1e-12, format!("simpson error {worst:e}"))?;

    let bands = default_bands();
    let owner = |f: f64| {
        bands.iter().enumerate().position(|(i, band)| {
            f >= band.low && (f < band.high || (i + 1 == bands.len() && f <= band.high))
        })
    };
    for bin in 0..=50 {
        let mut power = Array2::zeros((51, 1));
        power[[bin, 0]] = 1.0;
        let spec = Spectrogram {
            power,
            freqs: (0..=50).map(|k| k as f64).collect(),
            times: vec![0.5],
            df: 1.0,
        };
        let bp = band_power(&spec, &bands).map_err(|e| e.to_string())?;
        for b in 0..bands.len() {
            let v = bp.power[[b, 0]];
            if Some(b) == owner(bin as f64) {
                ensure(
                    v > 0.0,
                    format!("bin {bin} missing from its band {}", bands[b].name),
                )?;
            } else {
                ensure(v == 0.0, format!("bin {bin} leaks into {}", bands[b].name))?;
            }
        }
    }
    Ok(format!(
        "max error {worst:.1e} over degrees 0-3; single bins 0..50 land in their own band only"
    ))
}

// ---------------------------------------------------------------------------
// 5. STFT

fn criterion_5() -> Outcome {
    let fs = 100.0;
    let x = Array1::from_shape_fn(3000, |i| (2.0 * PI * 10.0 * i as f64 / fs).sin());
    let stft = Stft::new(fs, 1.0, 0.0, PowerScaling::Angular).map_err(|e| e.to_string())?;
    let spec = stft.power(x.view()).map_err(|e| e.to_string())?;
    let bands = default_bands();
    let bp = band_power(&spec, &bands).map_err(|e| e.to_string())?;
    let alpha = bands.iter().position(|b| b.name == "alpha").unwrap();
    let mut worst = 1.0f64;
    for f in 0..spec.power.ncols() {
        let total = simpson(&spec.power.column(f).to_vec(), spec.df).map_err(|e| e.to_string())?;
        worst = worst.min(bp.power[[alpha, f]] / total);
    }
    ensure(worst >= 0.95, format!("alpha share {worst:.4}"))?;

    let mut cases = 0;
    for t in [4.0, 10.0, 30.0, 300.0] {
        for t_w in [0.5, 1.0, 2.0, 4.0] {
            for r_o in [0.0, 0.25, 0.5, 0.75] {
                if t_w > t || FrameLayout::new(fs, t_w, r_o).is_err() {
                    continue;
                }
                let want = (t / ((1.0 - r_o) * t_w) + 1e-9).floor() as usize;
                let n = (t * fs) as usize;
                let stft =
                    Stft::new(fs, t_w, r_o, PowerScaling::Angular).map_err(|e| e.to_string())?;
                let got = stft
                    .power(Array1::zeros(n).view())
                    .map_err(|e| e.to_string())?
                    .power
                    .ncols();
                ensure(
                    got == want,
                    format!("T={t} t_w={t_w} r_o={r_o}: {got} frames, formula {want}"),
                )?;
                cases += 1;
            }
        }
    }
    ensure(cases >= 40, format!("only {cases} grid points usable"))?;
    Ok(format!(
        "min alpha share {worst:.4}; frame counts match on {cases} (T, t_w, r_o) points"
    ))
}

// ---------------------------------------------------------------------------
// 6. bandpass and resampler

/// Least-squares amplitude of a known-frequency sinusoid plus offset.
fn fitted_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (mut m, mut r) = ([[0.0f64; 3]; 3], [0.0f64; 3]);
    for (i, &v) in x.iter().enumerate() {
        let w = 2.0 * PI * freq * i as f64 / fs;
        let basis = [w.sin(), w.cos(), 1.0];
        for a in 0..3 {
            r[a] += basis[a] * v;
            for b in 0..3 {
                m[a][b] += basis[a] * basis[b];
            }
        }
    }
    // Cramer's rule
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let solve = |col: usize| {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = r[row];
        }
        det(&mc) / d
    };
    solve(0).hypot(solve(1))
}

fn criterion_6() -> Outcome {
    let fs = 100.0;
    let n = 12_000;
    let trim = 3000;
    let mut gains = Vec::new();
    for freq in [0.2, 10.0] {
        let row = Array1::from_shape_fn(n, |i| (2.0 * PI * freq * i as f64 / fs).sin());
        let sig = MultichannelSignal::new(vec!["a".into()], fs, row.insert_axis(Axis(0)))
            .map_err(|e| e.to_string())?;
        let out = bandpass(&sig, 1.0, 40.0).map_err(|e| e.to_string())?;
        let body: Vec<f64> = out.data.row(0).slice(ndarray::s![trim..n - trim]).to_vec();
        gains.push(20.0 * fitted_amplitude(&body, freq, fs).log10());
    }
    ensure(gains[0] <= -20.0, format!("0.2 Hz at {:.2} dB", gains[0]))?;
    ensure(
        gains[1].abs() <= 1.0,
        format!("10 Hz at {:.3} dB", gains[1]),
    )?;

    let (from, to) = (256.0, 100.0);
    let len = 256 * 20;
    let row = Array1::from_shape_fn(len, |i| (2.0 * PI * 5.0 * i as f64 / from).sin());
    let sig = MultichannelSignal::new(vec!["a".into()], from, row.insert_axis(Axis(0)))
        .map_err(|e| e.to_string())?;
    let out = resample(&sig, to).map_err(|e| e.to_string())?;
    let y = out.data.row(0);
    let edge = 100;
    let (mut err, mut norm) = (0.0, 0.0);
    for i in edge..y.len() - edge {
        let want = (2.0 * PI * 5.0 * i as f64 / to).sin();
        err += (y[i] - want).powi(2);
        norm += want * want;
    }
    let rel = (err / norm).sqrt();
    ensure(rel < 1e-3, format!("resampler relative RMS error {rel:e}"))?;
    Ok(format!(
        "0.2 Hz {:.1} dB, 10 Hz {:+.3} dB; 256->100 Hz relative RMS error {rel:.1e}",
        gains[0], gains[1]
    ))
}

// ---------------------------------------------------------------------------
// 7. classifier gradient and kappa

fn cross_entropy(w: &Array2<f64>, b: &Array1<f64>, x: &Array2<f64>, y: &[u32]) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.rows().into_iter().zip(y) {
        let h: Vec<f64> = (0..w.nrows()).map(|c| w.row(c).dot(&row) + b[c]).collect();
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + h.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - h[label as usize];
    }
    total / x.nrows() as f64
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (samples, dim, classes) = (40, 5, 3);
    let x = random_matrix(&mut rng, samples, dim, 2.0);
    let y: Vec<u32> = (0..samples)
        .map(|_| rng.random_range(0..classes as u32))
        .collect();
    let model = SoftmaxModel {
        weights: random_matrix(&mut rng, classes, dim, 1.0),
        bias: Array1::from_shape_fn(classes, |_| rng.random_range(-1.0..1.0)),
    };
    let (_, gw, gb) = loss_and_gradient(&model, x.view(), &y);
    let eps = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst = 0.0f64;
    for c in 0..classes {
        for d in 0..dim {
            let (mut wp, mut wm) = (model.weights.clone(), model.weights.clone());
            wp[[c, d]] += eps;
            wm[[c, d]] -= eps;
            let num = (cross_entropy(&wp, &model.bias, &x, &y)
                - cross_entropy(&wm, &model.bias, &x, &y))
                / (2.0 * eps);
            worst = worst.max(rel(gw[[c, d]], num));
        }
        let (mut bp, mut bm) = (model.bias.clone(), model.bias.clone());
        bp[c] += eps;
        bm[c] -= eps;
        let num = (cross_entropy(&model.weights, &bp, &x, &y)
            - cross_entropy(&model.weights, &bm, &x, &y))
            / (2.0 * eps);
        worst = worst.max(rel(gb[c], num));
    }
    ensure(worst < 1e-5, format!("gradient relative error {worst:e}"))?;

    let truth = [0u32, 0, 1, 1];
    let perfect = agreement(&truth, &truth, 2).map_err(|e| e.to_string())?;
    ensure(
        perfect.kappa == 1.0 && perfect.accuracy == 1.0,
        format!("perfect agreement gave kappa {}", perfect.kappa),
    )?;
    let flat = agreement(&truth, &[0, 0, 0, 0], 2).map_err(|e| e.to_string())?;
    ensure(
        flat.kappa == 0.0 && flat.accuracy == 0.5,
        format!("all-zero predictions gave kappa {}", flat.kappa),
    )?;
    let n = 10_000;
    let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let guess: Vec<u32> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let random = agreement(&truth, &guess, 2).map_err(|e| e.to_string())?;
    ensure(
        random.kappa.abs() < 0.05,
        format!("random predictions gave kappa {}", random.kappa),
    )?;
    Ok(format!(
        "gradient rel. error {worst:.1e}; kappa 1 / 0 / {:+.4}",
        random.kappa
    ))
}

// ---------------------------------------------------------------------------
// 8-10. end to end through the command layer

struct Corpus {
    _dir: tempfile::TempDir,
    cfg: PipelineConfig,
}

fn corpus() -> Result<Corpus, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig {
        out: dir.path().join("data"),
        seed: 11,
        ..PipelineConfig::default()
    };
    commands::synth(&cfg, 30, 30, 300.0, 256.0, 6, SynthFormat::Msr).map_err(|e| e.to_string())?;
    cfg.inputs = vec![dir.path().join("data").to_string_lossy().into_owned()];
    cfg.out = dir.path().join("run");
    Ok(Corpus { _dir: dir, cfg })
}

fn criterion_8(corpus: &Corpus) -> Outcome {
    let start = Instant::now();
    let mut cfg = corpus.cfg.clone();
    cfg.fit.k = 32;
    commands::fit(&cfg).map_err(|e| e.to_string())?;
    let entries = commands::tokenize(&cfg, &cfg.out.join(commands::CODEBOOK_FILE))
        .map_err(|e| e.to_string())?;
    ensure(
        entries.len() == 60,
        format!("{} recordings tokenized", entries.len()),
    )?;
    let summary =
        commands::eval(&cfg, &cfg.out.join(commands::TOKENS_DIR)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (acc, kappa) = (summary.report.test.accuracy, summary.report.test.kappa);
    let detail = format!(
        "accuracy {acc:.4}, kappa {kappa:.4} on {} test epochs, {elapsed:.1?}",
        summary.report.test_epochs
    );
    ensure(acc >= 0.95 && kappa >= 0.90, detail.clone())?;
    ensure(elapsed < Duration::from_secs(120), detail.clone())?;
    Ok(detail)
}

fn criterion_9(corpus: &Corpus) -> Outcome {
    let cfg = &corpus.cfg;
    let paths = microstate_cli::inputs::resolve_inputs(&cfg.inputs).map_err(|e| e.to_string())?;
    let prep = PrepConfig::default();
    let mut signals = Vec::new();
    let mut ids = Vec::new();
    for p in &paths {
        let rec = read_recording(p, None).map_err(|e| e.to_string())?;
        signals.push(preprocess(&rec, &prep).map_err(|e| e.to_string())?);
        ids.push(microstate_cli::inputs::recording_id(p));
    }
    let mut accs = Vec::new();
    for k in [4, 8, 16, 32] {
        let fit = FitConfig {
            k,
            seed: cfg.seed,
            ..FitConfig::default()
        };
        let (codebook, _) = fit_codebook(&signals, &prep, &fit).map_err(|e| e.to_string())?;
        let mut windows = Vec::new();
        for (s, id) in signals.iter().zip(&ids) {
            windows.extend(token_windows(&codebook, s, 300.0, id).map_err(|e| e.to_string())?);
        }
        let table = histogram_epochs(&windows, k).map_err(|e| e.to_string())?;
        let report = split_and_evaluate(&table, cfg.seed, &TrainConfig::default())
            .map_err(|e| e.to_string())?;
        accs.push(report.test.accuracy);
    }
    let detail = format!("accuracy for k = 4, 8, 16, 32: {accs:.4?}");
    ensure(accs.windows(2).all(|w| w[1] >= w[0] - 0.02), detail.clone())?;
    Ok(detail)
}

/// EDF bytes laid out field by field, independent of the library writer.
fn edf_fixture(digital: &[Vec<i16>], spr: usize, records: usize) -> Vec<u8> {
    let pad = |s: &str, w: usize| format!("{s:<w$}");
    let ns = digital.len();
    let mut h = String::new();
    h += &pad("0", 8);
    h += &pad("X M 01-JAN-1990 Fixture", 80);
    h += &pad("Startdate 01-JAN-2000 X X X", 80);
    h += "01.01.00";
    h += "12.30.00";
    h += &pad(&(256 * (ns + 1)).to_string(), 8);
    h += &pad("", 44);
    h += &pad(&records.to_string(), 8);
    h += &pad("1", 8);
    h += &pad(&ns.to_string(), 4);
    let labels = ["EEG F3-M2", "EEG C4-M1", "EEG O1-M2"];
    let per_signal: [(usize, &dyn Fn(usize) -> String); 10] = [
        (16, &|i| labels[i].to_string()),
        (80, &|_| "AgAgCl electrode".into()),
        (8, &|_| "uV".into()),
        (8, &|i| format!("{}", -200 - 100 * i as i64)),
        (8, &|i| format!("{}", 200 + 50 * i as i64)),
        (8, &|_| "-32768".into()),
        (8, &|_| "32767".into()),
        (80, &|_| "HP:0.1Hz LP:75Hz".into()),
        (8, &|_| spr.to_string()),
        (32, &|_| String::new()),
    ];
    for (width, value) in &per_signal {
        for i in 0..ns {
            h += &pad(&value(i), *width);
        }
    }
    let mut bytes = h.into_bytes();
    for r in 0..records {
        for d in digital {
            for v in &d[r * spr..(r + 1) * spr] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    bytes
}

fn criterion_10(corpus: &Corpus) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (spr, records) = (64, 5);
    let digital: Vec<Vec<i16>> = (0..3)
        .map(|_| {
            let mut d: Vec<i16> = (0..spr * records).map(|_| rng.random()).collect();
            d[0] = i16::MIN;
            d[1] = i16::MAX;
            d[2] = 0;
            d
        })
        .collect();
    let fixture = edf_fixture(&digital, spr, records);
    let parsed = parse_edf(&fixture).map_err(|e| e.to_string())?;
    ensure(
        parsed.digital == digital,
        "parsed digital samples differ from the fixture",
    )?;
    let encoded = parsed.encode().map_err(|e| e.to_string())?;
    let again: EdfFile = parse_edf(&encoded).map_err(|e| e.to_string())?;
    ensure(again == parsed, "re-encoded EDF parses differently")?;
    ensure(
        encoded[encoded.len() - spr * records * 6..]
            == fixture[fixture.len() - spr * records * 6..],
        "data records differ",
    )?;

    let names: Vec<String> = microstate::DEFAULT_CHANNELS
        .iter()
        .map(|s| s.to_string())
        .collect();
    let centroids = random_matrix(&mut rng, 32, 6, 30.0).mapv(|v| v as f32);
    let codebook = Codebook::new(centroids.clone(), CodebookMeta::for_channels(names))
        .map_err(|e| e.to_string())?;
    let bytes = encode_codebook(&codebook);
    let back = decode_codebook(&bytes).map_err(|e| e.to_string())?;
    ensure(
        back.centroids()
            .iter()
            .zip(centroids.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "codebook centroids changed bits",
    )?;
    ensure(
        encode_codebook(&back) == bytes,
        "codebook re-encoding differs",
    )?;
    ensure(back.meta == codebook.meta, "codebook metadata changed")?;

    let mut digests = Vec::new();
    for run in ["fit_a", "fit_b"] {
        let mut cfg = corpus.cfg.clone();
        cfg.fit.k = 16;
        cfg.out = corpus.cfg.out.with_file_name(run);
        commands::fit(&cfg).map_err(|e| e.to_string())?;
        digests
            .push(std::fs::read(cfg.out.join(commands::CODEBOOK_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(
        digests[0] == digests[1],
        "two fits with the same seed wrote different codebooks",
    )?;
    Ok(format!(
        "EDF digital samples exact ({} values); codebook bit-exact; fit reruns identical ({} bytes)",
        3 * spr * records,
        digests[0].len()
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    };
    report(1, "streaming k-means equals Lloyd", &criterion_1);
    report(2, "nearest-centroid assignment", &criterion_2);
    report(3, "GFP series and peaks", &criterion_3);
    report(4, "Simpson and band ownership", &criterion_4);
    report(5, "STFT energy and frame count", &criterion_5);
    report(6, "bandpass and resampler", &criterion_6);
    report(7, "gradient check and kappa", &criterion_7);
    match corpus() {
        Ok(c) => {
            report(8, "end-to-end synthetic staging", &|| criterion_8(&c));
            report(9, "accuracy across k", &|| criterion_9(&c));
            report(10, "format roundtrips and fit determinism", &|| {
                criterion_10(&c)
            });
        }
        Err(e) => {
            for (id, name) in [
                (8, "end-to-end synthetic staging"),
                (9, "accuracy across k"),
                (10, "format roundtrips and fit determinism"),
            ] {
                report(id, name, &|| Err(format!("corpus generation failed: {e}")));
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
