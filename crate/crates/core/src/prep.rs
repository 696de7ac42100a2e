//! Channel extraction, zero-phase bandpass filtering, and rational resampling.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::Recording;

/// `[N × samples]` signal in µV with the channel order it was selected in.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    pub channel_names: Vec<String>,
    pub fs: f64,
    pub data: Array2<f64>,
    pub labels: Option<Vec<u32>>,
    pub label_rate: Option<f64>,
}

impl MultichannelSignal {
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
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("signal holds non-finite samples".into()));
        }
        Ok(MultichannelSignal {
            channel_names,
            fs,
            data,
            labels: None,
            label_rate: None,
        })
    }

    /// Take a whole recording as-is, keeping its channel order and labels.
    pub fn from_recording(rec: Recording) -> Result<Self> {
        let mut sig = Self::new(rec.channel_names, rec.fs, rec.data)?;
        sig.labels = rec.labels;
        sig.label_rate = rec.label_rate;
        Ok(sig)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    fn with_data(&self, fs: f64, data: Array2<f64>) -> Self {
        MultichannelSignal {
            channel_names: self.channel_names.clone(),
            fs,
            data,
            labels: self.labels.clone(),
            label_rate: self.label_rate,
        }
    }
}

/// Reference suffixes removed before matching. Anything else (bipolar
/// derivations such as `F3-C3`) is left intact and will not match a bare lead.
pub const REFERENCE_SUFFIXES: [&str; 8] =
    ["-M1", "-M2", "-A1", "-A2", "-REF", "-AVG", "-LE", "-AR"];

/// Canonical lead name: trimmed, upper-cased, `EEG ` prefix, trailing dots
/// (PhysioNet padding) and one reference suffix removed.
pub fn normalize_channel_name(name: &str) -> String {
    let mut s = name.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim_start().to_string();
    }
    let s = s.trim_end_matches('.').to_string();
    for suffix in REFERENCE_SUFFIXES {
        if let Some(rest) = s.strip_suffix(suffix) {
            return rest.to_string();
        }
    }
    s
}

/// Pull `wanted` leads out of a recording, in `wanted` order.
pub fn select_channels<S: AsRef<str>>(rec: &Recording, wanted: &[S]) -> Result<MultichannelSignal> {
    let present: Vec<String> = rec
        .channel_names
        .iter()
        .map(|n| normalize_channel_name(n))
        .collect();
    let mut rows = Vec::with_capacity(wanted.len());
    for w in wanted {
        let key = normalize_channel_name(w.as_ref());
        let mut hits = present
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == key)
            .map(|(i, _)| i);
        let first = hits
            .next()
            .ok_or_else(|| Error::Lookup(w.as_ref().to_string()))?;
        if let Some(second) = hits.next() {
            return Err(Error::Contract(format!(
                "lead {} is ambiguous: {:?} and {:?}",
                w.as_ref(),
                rec.channel_names[first],
                rec.channel_names[second]
            )));
        }
        rows.push(first);
    }
    let data = rec.data.select(Axis(0), &rows);
    let names = wanted.iter().map(|w| w.as_ref().to_string()).collect();
    let mut sig = MultichannelSignal::new(names, rec.fs, data)?;
    sig.labels = rec.labels.clone();
    sig.label_rate = rec.label_rate;
    Ok(sig)
}

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z_inv * z_inv;
        let den = 1.0 + self.a[0] * z_inv + self.a[1] * z_inv * z_inv;
        num / den
    }

    /// Transposed direct-form II state for a unit step in steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }
}

/// Digital Butterworth bandpass as second-order sections.
///
/// `order` is the lowpass prototype order, giving `order` sections and a
/// `2·order`-pole filter. Designed by bilinear transform with prewarped
/// edges and normalized to unit gain at the geometric band centre.
pub fn butterworth_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<Vec<Biquad>> {
    if order == 0 {
        return Err(Error::param("filter order must be ≥ 1"));
    }
    if !(low > 0.0 && low < high && high < fs / 2.0) {
        return Err(Error::param(format!(
            "band edges must satisfy 0 < low < high < fs/2, got {low}..{high} at fs={fs}"
        )));
    }
    let k2 = 2.0 * fs;
    let w1 = k2 * (std::f64::consts::PI * low / fs).tan();
    let w2 = k2 * (std::f64::consts::PI * high / fs).tan();
    let bw = w2 - w1;
    let w0sq = w1 * w2;

    let mut z_poles = Vec::with_capacity(2 * order);
    for i in 0..order {
        let theta = std::f64::consts::PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        // s² − p·bw·s + w0² = 0
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            z_poles.push((k2 + s) / (k2 - s));
        }
    }

    let mut upper: Vec<Complex64> = z_poles.iter().copied().filter(|z| z.im > 1e-12).collect();
    let mut real: Vec<f64> = z_poles
        .iter()
        .filter(|z| z.im.abs() <= 1e-12)
        .map(|z| z.re)
        .collect();
    upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    real.sort_by(f64::total_cmp);
    let mut sections = Vec::with_capacity(order);
    for z in upper {
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-2.0 * z.re, z.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(r1 + r2), r1 * r2],
        });
    }

    let centre = 2.0 * (w0sq.sqrt() / k2).atan();
    let z_inv = Complex64::from_polar(1.0, -centre);
    let gain: Complex64 = sections.iter().map(|s| s.response(z_inv)).product();
    let scale = 1.0 / gain.norm();
    for v in sections[0].b.iter_mut() {
        *v *= scale;
    }
    Ok(sections)
}

/// Magnitude response of a section cascade at `freq` Hz.
pub fn sos_magnitude(sections: &[Biquad], freq: f64, fs: f64) -> f64 {
    let z_inv = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq / fs);
    sections
        .iter()
        .map(|s| s.response(z_inv))
        .product::<Complex64>()
        .norm()
}

fn sosfilt_in_place(sections: &[Biquad], x: &mut [f64]) {
    let Some(&x0) = x.first() else { return };
    let mut level = x0;
    for s in sections {
        let [mut z1, mut z2] = s.step_state().map(|v| v * level);
        level *= s.dc_gain();
        for v in x.iter_mut() {
            let input = *v;
            let y = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[0] * y + z2;
            z2 = s.b[2] * input - s.a[1] * y;
            *v = y;
        }
    }
}

/// Odd extension about both endpoints: `x[-i] = 2·x[0] − x[i]`.
fn odd_extend(x: ArrayView1<f64>, pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    out.extend(x.iter().copied());
    out.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    out
}

/// Forward-backward application of `sections` to one channel.
pub fn filtfilt(sections: &[Biquad], x: ArrayView1<f64>, pad: usize) -> Array1<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_owned();
    }
    let pad = pad.min(n - 1);
    let mut buf = odd_extend(x, pad);
    sosfilt_in_place(sections, &mut buf);
    buf.reverse();
    sosfilt_in_place(sections, &mut buf);
    buf.reverse();
    Array1::from(buf[pad..pad + n].to_vec())
}

pub const BUTTERWORTH_ORDER: usize = 4;

/// Zero-phase 4th-order Butterworth bandpass between `low` and `high` Hz.
pub fn bandpass(signal: &MultichannelSignal, low: f64, high: f64) -> Result<MultichannelSignal> {
    let sections = butterworth_bandpass(BUTTERWORTH_ORDER, low, high, signal.fs)?;
    // three periods of the lower edge
    let pad = ((3.0 * signal.fs / low).round() as usize).max(6 * BUTTERWORTH_ORDER + 3);
    let rows: Vec<Array1<f64>> = signal
        .data
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| filtfilt(&sections, row, pad))
        .collect();
    let mut data = Array2::zeros(signal.data.raw_dim());
    for (mut dst, src) in data.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
    Ok(signal.with_data(signal.fs, data))
}

pub const RESAMPLE_TAPS_PER_PHASE: usize = 64;
pub const KAISER_BETA: f64 = 8.6;
pub const MAX_RATIO_DENOMINATOR: u64 = 10_000;

/// Best rational `p/q ≈ x` with `q ≤ max_den`, by continued fractions.
pub fn rational_approximation(x: f64, max_den: u64) -> (u64, u64) {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    loop {
        let a = r.floor();
        let ai = a as u64;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac < 1e-12 || (h1 as f64 / k1 as f64 - x).abs() <= 1e-12 * x {
            break;
        }
        r = 1.0 / frac;
    }
    (h1, k1)
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut sum, mut term, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// `up` phases × `RESAMPLE_TAPS_PER_PHASE` taps, each phase summing to 1.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(from_fs: f64, to_fs: f64) -> Result<Self> {
        if !(from_fs > 0.0 && to_fs > 0.0 && from_fs.is_finite() && to_fs.is_finite()) {
            return Err(Error::param(format!(
                "rates must be positive, got {from_fs} → {to_fs}"
            )));
        }
        let ratio = to_fs / from_fs;
        let (p, q) = rational_approximation(ratio, MAX_RATIO_DENOMINATOR);
        if p == 0 || ((p as f64 / q as f64) - ratio).abs() > 1e-9 * ratio {
            return Err(Error::param(format!(
                "{from_fs} → {to_fs} Hz has no rational ratio with denominator ≤ {MAX_RATIO_DENOMINATOR}"
            )));
        }
        let (up, down) = (p as usize, q as usize);
        let cutoff = (up as f64 / down as f64).min(1.0);
        let half = (RESAMPLE_TAPS_PER_PHASE / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut table = Vec::with_capacity(up * RESAMPLE_TAPS_PER_PHASE);
        for phase in 0..up {
            let d = phase as f64 / up as f64;
            let start = table.len();
            for tap in 0..RESAMPLE_TAPS_PER_PHASE {
                // tap t sits at input offset t − (half − 1) from the base sample
                let tau = d - (tap as f64 - (half - 1.0));
                let r = tau / half;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                };
                let x = std::f64::consts::PI * cutoff * tau;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                table.push(cutoff * sinc * w);
            }
            let sum: f64 = table[start..].iter().sum();
            for v in &mut table[start..] {
                *v /= sum;
            }
        }
        Ok(Resampler { up, down, table })
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, n: usize) -> usize {
        (2 * n * self.up + self.down) / (2 * self.down)
    }

    pub fn process(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let n = x.len();
        if n == 0 {
            return Array1::zeros(0);
        }
        let at = |i: isize| -> f64 {
            let last = n as isize - 1;
            if i < 0 {
                let k = (-i).min(last) as usize;
                2.0 * x[0] - x[k]
            } else if i > last {
                let k = (i - last).min(last) as usize;
                2.0 * x[n - 1] - x[n - 1 - k]
            } else {
                x[i as usize]
            }
        };
        let offset = RESAMPLE_TAPS_PER_PHASE as isize / 2 - 1;
        let out_len = self.output_len(n);
        let mut out = Array1::zeros(out_len);
        for (j, y) in out.iter_mut().enumerate() {
            let u = j * self.down;
            let base = (u / self.up) as isize;
            let phase = u % self.up;
            let taps =
                &self.table[phase * RESAMPLE_TAPS_PER_PHASE..(phase + 1) * RESAMPLE_TAPS_PER_PHASE];
            let first = base - offset;
            let mut acc = 0.0;
            if first >= 0 && first as usize + RESAMPLE_TAPS_PER_PHASE <= n {
                let window = x.slice(ndarray::s![first..first + RESAMPLE_TAPS_PER_PHASE as isize]);
                for (h, v) in taps.iter().zip(window.iter()) {
                    acc += h * v;
                }
            } else {
                for (t, h) in taps.iter().enumerate() {
                    acc += h * at(first + t as isize);
                }
            }
            *y = acc;
        }
        out
    }
}

/// Resample every channel to `target_fs`. Equal rates pass through untouched.
pub fn resample(signal: &MultichannelSignal, target_fs: f64) -> Result<MultichannelSignal> {
    if target_fs == signal.fs {
        return Ok(signal.clone());
    }
    let r = Resampler::new(signal.fs, target_fs)?;
    let rows: Vec<Array1<f64>> = signal
        .data
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| r.process(row))
        .collect();
    let mut data = Array2::zeros((signal.n_channels(), r.output_len(signal.n_samples())));
    for (mut dst, src) in data.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
    Ok(signal.with_data(target_fs, data))
}
